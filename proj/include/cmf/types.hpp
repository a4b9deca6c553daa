#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace cmf {

namespace detail {
// The batched kernels allocate many short-lived buffers above glibc's default
// mmap threshold; raising it keeps them on the heap instead of paying a
// mmap/munmap (and page-zeroing) round trip per temporary.
#if defined(__GLIBC__)
inline const bool malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  return true;
}();
#endif
}  // namespace detail

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thrown for domain/shape violations and numeric failures; the CLI maps it
// to exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// n x d batch of points, one row per point, with the seed it was drawn from.
struct ParticleSet {
  Matrix points;           // n x d
  std::uint64_t seed = 0;  // root seed of the stream that produced the points

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
};

inline void check_finite(const Eigen::Ref<const Matrix>& m,
                         const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite entries");
}

}  // namespace cmf
