// CSV / JSON plumbing shared by the CLI and the checkpoint formats, plus the
// run manifest every CLI invocation writes next to its outputs.
#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cmf/histogram.hpp"
#include "cmf/types.hpp"
#include "json.hpp"

namespace cmf {

inline void write_particles_csv(const ParticleSet& ps,
                                const std::string& path) {
  std::ofstream os(path);
  if (!os) throw NumericError("cannot open " + path);
  for (Eigen::Index j = 0; j < ps.dim(); ++j)
    os << (j ? "," : "") << 'x' << j;
  os << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < ps.size(); ++i) {
    for (Eigen::Index j = 0; j < ps.dim(); ++j)
      os << (j ? "," : "") << ps.points(i, j);
    os << '\n';
  }
}

inline ParticleSet read_particles_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw NumericError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw NumericError("empty csv: " + path);
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw NumericError("ragged csv: " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw NumericError("no data rows in " + path);
  Matrix pts(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return ParticleSet{std::move(pts), 0};
}

inline void write_histogram_csv(const Histogram1D& h,
                                const std::string& path) {
  std::ofstream os(path);
  if (!os) throw NumericError("cannot open " + path);
  os << "center,weight\n" << std::setprecision(17);
  for (std::size_t i = 0; i < h.centers.size(); ++i)
    os << h.centers[i] << ',' << h.weights[i] << '\n';
}

namespace detail {

// Minimal SHA-1, enough for git-blob-style content addressing of inputs.
struct Sha1 {
  std::array<std::uint32_t, 5> h{0x67452301u, 0xEFCDAB89u, 0x98BADCFEu,
                                 0x10325476u, 0xC3D2E1F0u};
  std::vector<std::uint8_t> buf;
  std::uint64_t total = 0;

  static std::uint32_t rol(std::uint32_t x, int s) {
    return (x << s) | (x >> (32 - s));
  }

  void block(const std::uint8_t* p) {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
             (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
    for (int i = 16; i < 80; ++i)
      w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    auto [a, b, c, d, e] = h;
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) { f = (b & c) | ((~b) & d); k = 0x5A827999u; }
      else if (i < 40) { f = b ^ c ^ d; k = 0x6ED9EBA1u; }
      else if (i < 60) { f = (b & c) | (b & d) | (c & d); k = 0x8F1BBCDCu; }
      else { f = b ^ c ^ d; k = 0xCA62C1D6u; }
      const std::uint32_t t = rol(a, 5) + f + e + k + w[i];
      e = d; d = c; c = rol(b, 30); b = a; a = t;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d; h[4] += e;
  }

  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    total += len;
    buf.insert(buf.end(), p, p + len);
    std::size_t off = 0;
    while (buf.size() - off >= 64) {
      block(buf.data() + off);
      off += 64;
    }
    buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(off));
  }

  std::string hex() {
    const std::uint64_t bits = total * 8;
    std::uint8_t pad = 0x80;
    update(&pad, 1);
    const std::uint8_t zero = 0;
    while (total % 64 != 56) update(&zero, 1);
    std::uint8_t lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = std::uint8_t(bits >> (56 - 8 * i));
    update(lenb, 8);
    std::ostringstream os;
    for (std::uint32_t x : h)
      os << std::hex << std::setw(8) << std::setfill('0') << x;
    return os.str();
  }
};

}  // namespace detail

// git blob hash: sha1("blob <len>\0" + content).
inline std::string git_blob_hash(const std::string& content) {
  detail::Sha1 sha;
  const std::string header = "blob " + std::to_string(content.size());
  sha.update(header.data(), header.size() + 1);  // include the NUL
  sha.update(content.data(), content.size());
  return sha.hex();
}

inline std::string git_blob_hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NumericError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return git_blob_hash(ss.str());
}

inline std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Everything needed to reproduce a CLI run bit-identically: the command, its
// config snapshot, the seed, content hashes of inputs, and all output paths.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::string> input_paths;
  std::vector<std::string> output_paths;
  std::string started, finished;

  nlohmann::json to_json() const {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& p : input_paths)
      inputs.push_back({{"path", p}, {"sha1", git_blob_hash_file(p)}});
    return nlohmann::json{{"command", command}, {"config", config},
                          {"seed", seed},       {"inputs", inputs},
                          {"outputs", output_paths},
                          {"started", started}, {"finished", finished}};
  }

  void write(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw NumericError("cannot open " + path);
    os << to_json().dump(2) << '\n';
  }
};

}  // namespace cmf
