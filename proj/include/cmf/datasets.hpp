// Seeded toy-data generators for the 1D and 2D experiments.
#pragma once

#include <Eigen/Cholesky>
#include <cmath>
#include <string>
#include <vector>

#include "cmf/rng.hpp"
#include "cmf/types.hpp"

namespace cmf {

// 1D Gaussian mixture described by per-component mean/std/weight.
struct Mixture1D {
  std::vector<double> mean, std, weight;  // weight need not be normalized

  double total_weight() const {
    double s = 0.0;
    for (double w : weight) s += w;
    return s;
  }

  double pdf(double x) const {
    const double tw = total_weight();
    double p = 0.0;
    for (std::size_t k = 0; k < mean.size(); ++k) {
      const double z = (x - mean[k]) / std[k];
      p += (weight[k] / tw) * std::exp(-0.5 * z * z) /
           (std[k] * std::sqrt(2.0 * M_PI));
    }
    return p;
  }

  double analytic_mean() const {
    const double tw = total_weight();
    double m = 0.0;
    for (std::size_t k = 0; k < mean.size(); ++k) m += weight[k] / tw * mean[k];
    return m;
  }
};

// rho1 as used to produce the published curves: means/scales shrunk by 0.8,
// weights (1,3,2,1)/7.
inline Mixture1D mixture_rho1() {
  return Mixture1D{{-0.6 * 0.8, -0.1 * 0.8, 0.3 * 0.8, 0.7 * 0.8},
                   {0.15 * 0.8, 0.07 * 0.8, 0.1 * 0.8, 0.15 * 0.8},
                   {1.0, 3.0, 2.0, 1.0}};
}

// The variant described in prose (unshrunk means/scales); kept selectable.
inline Mixture1D mixture_rho1_prose() {
  return Mixture1D{{-0.1, 0.3, 0.3, 0.7}, {0.07, 0.1, 0.1, 0.15},
                   {1.0 / 7, 3.0 / 7, 2.0 / 7, 1.0 / 7}};
}

inline Mixture1D mixture_rho2() {
  return Mixture1D{{-0.8, 1.5, 3.0}, {0.4, 0.6, 0.5},
                   {1.0 / 2, 1.0 / 3, 1.0 / 6}};
}

struct DatasetSpec {
  std::string name;           // see sample_dataset for the accepted names
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
  bool center = false;        // subtract the sample mean after drawing
  // Only for name == "gaussian": target moments.
  Vector gauss_mean;
  Matrix gauss_cov;
};

inline Eigen::Index dataset_dim(const std::string& name) {
  if (name == "mixture-rho1" || name == "mixture-rho1-prose" ||
      name == "mixture-rho2")
    return 1;
  if (name == "circles" || name == "s-curve" || name == "checkerboard" ||
      name == "scaled-rotated-s-curve" || name == "diag-checkerboard")
    return 2;
  if (name == "gaussian") return -1;  // taken from gauss_mean
  throw NumericError("unknown dataset: " + name);
}

namespace detail {

inline Matrix sample_mixture1d(const Mixture1D& mix, Eigen::Index n,
                               RngKey key) {
  const double tw = mix.total_weight();
  Matrix out(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = uniform2(key, static_cast<std::uint64_t>(2 * i));
    double acc = 0.0;
    std::size_t k = 0;
    for (; k + 1 < mix.mean.size(); ++k) {
      acc += mix.weight[k] / tw;
      if (u[0] <= acc) break;
    }
    const double z = normal1(key, static_cast<std::uint64_t>(2 * i + 1));
    out(i, 0) = mix.mean[k] + mix.std[k] * z;
  }
  return out;
}

// t in [-3pi/2, 3pi/2] traced as (sin t, sign(t)(cos t - 1)), plus isotropic
// jitter. This is the usual S-curve projected to 2D.
inline Matrix sample_scurve(Eigen::Index n, RngKey key, double jitter) {
  Matrix out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = uniform2(key, static_cast<std::uint64_t>(2 * i));
    const auto z = normal2(key, static_cast<std::uint64_t>(2 * i + 1));
    const double t = 3.0 * M_PI * (u[0] - 0.5);
    out(i, 0) = std::sin(t) + jitter * z[0];
    out(i, 1) = (t >= 0 ? 1.0 : -1.0) * (std::cos(t) - 1.0) + jitter * z[1];
  }
  return out;
}

// Uniform over the 8 "black" cells ((i+j) even) of the 4x4 lattice on
// [-2,2]^2.
inline Matrix sample_checkerboard(Eigen::Index n, RngKey key) {
  Matrix out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = uniform2(key, static_cast<std::uint64_t>(2 * i));
    const auto v = uniform2(key, static_cast<std::uint64_t>(2 * i + 1));
    const int cell = static_cast<int>(u[0] * 8.0) % 8;
    const int row = cell / 2;                  // 0..3
    const int col = 2 * (cell % 2) + row % 2;  // black cells: (row+col) even
    out(i, 0) = -2.0 + col + v[0];
    out(i, 1) = -2.0 + row + v[1];
  }
  return out;
}

inline Matrix sample_circles(Eigen::Index n, RngKey key, double jitter) {
  Matrix out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = uniform2(key, static_cast<std::uint64_t>(2 * i));
    const double z = normal1(key, static_cast<std::uint64_t>(2 * i + 1));
    const double radius = (u[0] < 0.5 ? 0.5 : 1.0) + jitter * z;
    const double theta = 2.0 * M_PI * u[1];
    out(i, 0) = radius * std::cos(theta);
    out(i, 1) = radius * std::sin(theta);
  }
  return out;
}

inline void rotate45(Matrix& pts) {
  const double c = std::sqrt(0.5);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double x = pts(i, 0), y = pts(i, 1);
    pts(i, 0) = c * (x - y);
    pts(i, 1) = c * (x + y);
  }
}

}  // namespace detail

// Draws spec.n points of the named dataset; bit-identical given equal seeds.
inline ParticleSet sample_dataset(const DatasetSpec& spec) {
  if (spec.n < 1) throw NumericError("sample_dataset: n must be >= 1");
  const RngKey key = RngKey::from_seed(spec.seed).fold_in(kStreamDataset);
  Matrix pts;
  if (spec.name == "mixture-rho1") {
    pts = detail::sample_mixture1d(mixture_rho1(), spec.n, key);
  } else if (spec.name == "mixture-rho1-prose") {
    pts = detail::sample_mixture1d(mixture_rho1_prose(), spec.n, key);
  } else if (spec.name == "mixture-rho2") {
    pts = detail::sample_mixture1d(mixture_rho2(), spec.n, key);
  } else if (spec.name == "circles") {
    pts = detail::sample_circles(spec.n, key, 0.05);
  } else if (spec.name == "s-curve") {
    pts = detail::sample_scurve(spec.n, key, 0.05);
  } else if (spec.name == "scaled-rotated-s-curve") {
    pts = detail::sample_scurve(spec.n, key, 0.05);
    pts.col(0) *= 2.0;
    pts.col(1) *= 0.5;
    detail::rotate45(pts);
  } else if (spec.name == "checkerboard") {
    pts = detail::sample_checkerboard(spec.n, key);
  } else if (spec.name == "diag-checkerboard") {
    pts = detail::sample_checkerboard(spec.n, key);
    detail::rotate45(pts);
  } else if (spec.name == "gaussian") {
    if (spec.gauss_mean.size() == 0 || spec.gauss_cov.rows() == 0)
      throw NumericError("sample_dataset: gaussian needs mean and cov");
    const Eigen::Index d = spec.gauss_mean.size();
    Matrix z(spec.n, d);
    fill_normal(z, key);
    const Matrix chol = Eigen::LLT<Matrix>(spec.gauss_cov).matrixL();
    pts = z * chol.transpose();
    pts.rowwise() += spec.gauss_mean.transpose();
  } else {
    throw NumericError("unknown dataset: " + spec.name);
  }
  if (spec.center) pts.rowwise() -= pts.colwise().mean();
  check_finite(pts, "sample_dataset");
  return ParticleSet{std::move(pts), spec.seed};
}

}  // namespace cmf
