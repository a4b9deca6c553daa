// Closed-form Gaussian factorizations and the Gaussian-to-Gaussian OT map.
//
// For a centered Gaussian target N(0, S) the moment factorization has the
// quadratic potential u(x) = x'Sx/2 with Gibbs factor N(0, S^-1): spread
// inverts. The conjugate factorization of N(m, S) instead uses
// w(x) = (x-r)' S^{-1/3} (x-r) / 2 with Gibbs factor N(r, S^{1/3}) and
// r = (I + S^{1/3})^{-1} m, so the Gibbs factor tracks the target's scale.
// These closed forms double as oracles for the learned solvers.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "cmf/types.hpp"
#include "json.hpp"

namespace cmf {

struct GaussianParams {
  Vector mean;
  Matrix cov;
};

// x -> matrix * x + offset
struct AffineMap {
  Matrix matrix;
  Vector offset;

  Vector operator()(const Vector& x) const { return matrix * x + offset; }
};

enum class FactorKind { kMoment, kConjugate };

struct GaussianFactorization {
  GaussianParams target;    // (m, Sigma)
  GaussianParams gibbs;     // (r, Delta)
  Matrix potential_matrix;  // quadratic form of u or w
  FactorKind kind = FactorKind::kConjugate;
  double log_normalizer = 0.0;  // ln C = (d/2) ln(2 pi) + (1/2) ln det Delta

  // Generative map: gradient of the conjugate potential (conjugate kind) or
  // of the potential itself (moment kind); both are affine here.
  AffineMap generative_map() const {
    if (kind == FactorKind::kConjugate)
      return AffineMap{gibbs.cov, gibbs.mean};  // grad w*(y) = Delta y + r
    return AffineMap{potential_matrix, Vector::Zero(potential_matrix.rows())};
  }
};

// S = Q diag(l) Q' -> Q diag(l^p) Q'. Hard error on asymmetry or any
// eigenvalue below the 1e-12 floor (degenerate covariances are rejected,
// not regularized).
inline Matrix spd_power(const Matrix& s, double p) {
  if (s.rows() != s.cols()) throw NumericError("spd_power: matrix not square");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if (((s - s.transpose()).cwiseAbs().maxCoeff()) > 1e-12 * scale)
    throw NumericError("spd_power: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (eig.info() != Eigen::Success)
    throw NumericError("spd_power: eigendecomposition failed");
  const Vector& vals = eig.eigenvalues();
  if (vals.minCoeff() <= 1e-12)
    throw NumericError("spd_power: matrix not positive definite (min eigenvalue " +
                       std::to_string(vals.minCoeff()) + ")");
  Vector powed = vals.array().pow(p);
  Matrix out = eig.eigenvectors() * powed.asDiagonal() *
               eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

// Bures OT map from N(m_A, S_A) to N(m_B, S_B):
//   x -> m_B + M (x - m_A),  M = S_A^{-1/2} (S_A^{1/2} S_B S_A^{1/2})^{1/2} S_A^{-1/2}
inline AffineMap gaussian_ot_map(const GaussianParams& a,
                                 const GaussianParams& b) {
  const Matrix root_a = spd_power(a.cov, 0.5);
  const Matrix inv_root_a = spd_power(a.cov, -0.5);
  const Matrix mid = spd_power(root_a * b.cov * root_a, 0.5);
  Matrix m = inv_root_a * mid * inv_root_a;
  m = 0.5 * (m + m.transpose());
  return AffineMap{m, b.mean - m * a.mean};
}

inline double gaussian_log_normalizer(const Matrix& gibbs_cov) {
  const Eigen::Index d = gibbs_cov.rows();
  const Matrix l = Eigen::LLT<Matrix>(gibbs_cov).matrixL();
  double half_logdet = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) half_logdet += std::log(l(i, i));
  return 0.5 * d * std::log(2.0 * M_PI) + half_logdet;
}

// Moment factorization of the centered target N(0, Sigma): u = x'Sx/2 with
// Gibbs factor N(0, S^-1). The potential is only defined up to translation;
// the m = 0 representative is returned.
inline GaussianFactorization moment_factorization_gaussian(const Matrix& sigma) {
  GaussianFactorization f;
  const Eigen::Index d = sigma.rows();
  f.kind = FactorKind::kMoment;
  f.target = GaussianParams{Vector::Zero(d), sigma};
  f.potential_matrix = spd_power(sigma, 1.0);  // validates SPD, symmetrizes
  f.gibbs = GaussianParams{Vector::Zero(d), spd_power(sigma, -1.0)};
  f.log_normalizer = gaussian_log_normalizer(f.gibbs.cov);
  return f;
}

// Conjugate factorization of N(m, Sigma): Delta = Sigma^{1/3},
// r = (I + Delta)^{-1} m, w = (x-r)' Delta^{-1} (x-r) / 2.
inline GaussianFactorization conjugate_factorization_gaussian(
    const Vector& m, const Matrix& sigma) {
  GaussianFactorization f;
  const Eigen::Index d = sigma.rows();
  if (m.size() != d) throw NumericError("conjugate_factorization: mean/cov mismatch");
  f.kind = FactorKind::kConjugate;
  f.target = GaussianParams{m, sigma};
  const Matrix delta = spd_power(sigma, 1.0 / 3.0);
  const Vector r = (Matrix::Identity(d, d) + delta).ldlt().solve(m);
  f.gibbs = GaussianParams{r, delta};
  f.potential_matrix = spd_power(sigma, -1.0 / 3.0);
  f.log_normalizer = gaussian_log_normalizer(delta);

  // The OT map from the Gibbs factor back to the target must coincide with
  // grad w*(y) = Delta y + r; this is the defining property.
  const AffineMap ot = gaussian_ot_map(f.gibbs, f.target);
  const double err =
      (ot.matrix - delta).cwiseAbs().maxCoeff() +
      (ot.offset - r).cwiseAbs().maxCoeff();
  if (err > 1e-10 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))
    throw NumericError("conjugate_factorization: OT-map consistency check failed");
  return f;
}

inline nlohmann::json to_json(const GaussianFactorization& f) {
  auto mat = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  auto vec = [](const Vector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
  };
  return nlohmann::json{
      {"kind", f.kind == FactorKind::kMoment ? "moment" : "conjugate"},
      {"target", {{"mean", vec(f.target.mean)}, {"cov", mat(f.target.cov)}}},
      {"gibbs", {{"mean", vec(f.gibbs.mean)}, {"cov", mat(f.gibbs.cov)}}},
      {"potential_matrix", mat(f.potential_matrix)},
      {"log_normalizer", f.log_normalizer}};
}

}  // namespace cmf
