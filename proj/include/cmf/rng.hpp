// Counter-based RNG (Philox4x32-10) with splittable keys.
//
// Every stochastic routine in the library takes an explicit key; there is no
// global generator state. A draw is addressed by (key, counter), so particle
// streams, training steps and dataset generators can all derive independent
// substreams that are reproducible regardless of evaluation order.
#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>

namespace cmf {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct PhiloxBlock {
  std::uint32_t x[4];
};

// One 4x32 block of Philox with 10 rounds.
inline PhiloxBlock philox4x32(std::uint64_t key, std::uint64_t ctr_hi,
                              std::uint64_t ctr_lo) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  std::uint32_t c0 = static_cast<std::uint32_t>(ctr_lo);
  std::uint32_t c1 = static_cast<std::uint32_t>(ctr_lo >> 32);
  std::uint32_t c2 = static_cast<std::uint32_t>(ctr_hi);
  std::uint32_t c3 = static_cast<std::uint32_t>(ctr_hi >> 32);
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);

  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c0;
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c2;
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    c0 = hi1 ^ c1 ^ k0;
    c1 = lo1;
    c2 = hi0 ^ c3 ^ k1;
    c3 = lo0;
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return PhiloxBlock{{c0, c1, c2, c3}};
}

inline double u64_to_unit_double(std::uint64_t x) {
  // 53 mantissa bits, shifted into (0, 1); never exactly 0 so log() is safe.
  return static_cast<double>(x >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

}  // namespace detail

// A key identifies an independent stream. fold_in derives a child stream, so
// e.g. key.fold_in(step).fold_in(kNoise) addresses the noise of one LMC step.
struct RngKey {
  std::uint64_t v = 0;

  static RngKey from_seed(std::uint64_t seed) {
    return RngKey{detail::splitmix64(seed ^ 0x5CA1AB1E5EEDULL)};
  }
  RngKey fold_in(std::uint64_t tag) const {
    return RngKey{detail::splitmix64(v ^ detail::splitmix64(tag))};
  }
};

// Stream tags used to keep substreams of one seed disjoint by purpose.
enum : std::uint64_t {
  kStreamDataset = 1,
  kStreamInit = 2,
  kStreamLmcNoise = 3,
  kStreamResample = 4,
  kStreamProbe = 5,
  kStreamSubsample = 6,
};

// Two uniform doubles in (0,1) from counter `ctr` of stream `key`.
inline std::array<double, 2> uniform2(RngKey key, std::uint64_t ctr) {
  const detail::PhiloxBlock b = detail::philox4x32(key.v, 0, ctr);
  const std::uint64_t lo =
      (static_cast<std::uint64_t>(b.x[1]) << 32) | b.x[0];
  const std::uint64_t hi =
      (static_cast<std::uint64_t>(b.x[3]) << 32) | b.x[2];
  return {detail::u64_to_unit_double(lo), detail::u64_to_unit_double(hi)};
}

// Two standard normals (Box-Muller) from counter `ctr`.
inline std::array<double, 2> normal2(RngKey key, std::uint64_t ctr) {
  const std::array<double, 2> u = uniform2(key, ctr);
  const double r = std::sqrt(-2.0 * std::log(u[0]));
  const double t = 2.0 * M_PI * u[1];
  return {r * std::cos(t), r * std::sin(t)};
}

// Fills `out` (row-major traversal) with uniforms in (lo, hi).
inline void fill_uniform(Eigen::Ref<Eigen::MatrixXd> out, RngKey key,
                         double lo = 0.0, double hi = 1.0,
                         std::uint64_t ctr_base = 0) {
  const Eigen::Index n = out.size();
  for (Eigen::Index i = 0; i < n; i += 2) {
    const auto u = uniform2(key, ctr_base + static_cast<std::uint64_t>(i / 2));
    const Eigen::Index r0 = i / out.cols(), c0 = i % out.cols();
    out(r0, c0) = lo + (hi - lo) * u[0];
    if (i + 1 < n) {
      const Eigen::Index r1 = (i + 1) / out.cols(), c1 = (i + 1) % out.cols();
      out(r1, c1) = lo + (hi - lo) * u[1];
    }
  }
}

// Fills `out` with i.i.d. standard normals.
inline void fill_normal(Eigen::Ref<Eigen::MatrixXd> out, RngKey key,
                        std::uint64_t ctr_base = 0) {
  const Eigen::Index n = out.size();
  for (Eigen::Index i = 0; i < n; i += 2) {
    const auto z = normal2(key, ctr_base + static_cast<std::uint64_t>(i / 2));
    const Eigen::Index r0 = i / out.cols(), c0 = i % out.cols();
    out(r0, c0) = z[0];
    if (i + 1 < n) {
      const Eigen::Index r1 = (i + 1) / out.cols(), c1 = (i + 1) % out.cols();
      out(r1, c1) = z[1];
    }
  }
}

inline double uniform1(RngKey key, std::uint64_t ctr) {
  return uniform2(key, ctr)[0];
}

inline double normal1(RngKey key, std::uint64_t ctr) {
  return normal2(key, ctr)[0];
}

}  // namespace cmf
