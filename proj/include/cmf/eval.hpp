// Quantitative evaluation: debiased entropic OT (Sinkhorn divergence) with
// log-domain iterations, the pairwise-distance epsilon heuristic, and exact
// Wasserstein-1 between 1D histograms.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cmf/histogram.hpp"
#include "cmf/types.hpp"

namespace cmf {

struct SinkhornReport {
  double divergence = 0.0;
  double epsilon = 0.0;
  int iterations = 0;        // max over the three OT subproblems
  double marginal_err = 0.0;  // worst L_inf marginal violation at exit
  bool converged = true;
};

struct SinkhornConfig {
  int max_iter = 2000;
  double tol = 1e-10;  // L_inf marginal violation target
};

// eps = 0.05 * E |x - x'|^2 over cross pairs, each batch capped at 2048
// points (leading rows) before the average.
inline double epsilon_heuristic(const ParticleSet& a, const ParticleSet& b) {
  if (a.size() == 0 || b.size() == 0)
    throw NumericError("epsilon_heuristic: empty batch");
  if (a.dim() != b.dim())
    throw NumericError("epsilon_heuristic: dimension mismatch");
  const Eigen::Index na = std::min<Eigen::Index>(a.size(), 2048);
  const Eigen::Index nb = std::min<Eigen::Index>(b.size(), 2048);
  const Matrix xa = a.points.topRows(na);
  const Matrix xb = b.points.topRows(nb);
  const Vector sa = xa.rowwise().squaredNorm();
  const Vector sb = xb.rowwise().squaredNorm();
  // mean ||x||^2 + mean ||x'||^2 - 2 <mean x, mean x'>
  const double cross =
      sa.mean() + sb.mean() -
      2.0 * (xa.colwise().mean().dot(xb.colwise().mean()));
  return 0.05 * cross;
}

namespace detail {

struct OtEntropicResult {
  double value = 0.0;
  int iterations = 0;
  double marginal_err = 0.0;
  bool converged = false;
};

// Entropic OT with cost |x-y|^2/2, uniform weights, log-domain Sinkhorn.
// Returns the dual value sum(f)/n + sum(g)/m.
inline OtEntropicResult ot_entropic(const Matrix& x, const Matrix& y,
                                    double epsilon,
                                    const SinkhornConfig& cfg) {
  const Eigen::Index n = x.rows(), m = y.rows();
  Matrix cost(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    cost.col(j) =
        0.5 * (x.rowwise() - y.row(j)).rowwise().squaredNorm();

  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  Vector f = Vector::Zero(n), g = Vector::Zero(m);
  OtEntropicResult res;

  Matrix work(n, m);  // reused across sweeps
  auto marginal_violation = [&]() {
    work = (-cost) / epsilon;
    work.colwise() += f / epsilon;
    work.rowwise() += (g / epsilon).transpose();
    work.array() += log_a + log_b;
    work = work.array().exp();
    return std::max(
        (work.rowwise().sum().array() - std::exp(log_a)).abs().maxCoeff(),
        (work.colwise().sum().array() - std::exp(log_b)).abs().maxCoeff());
  };

  Vector mx_r(n), mx_c(m), sums_r(n), sums_c(m);
  for (int it = 0; it < cfg.max_iter; ++it) {
    // f_i = -eps * LSE_j[(g_j - C_ij)/eps + log b_j], then symmetrically g.
    work = (-cost) / epsilon;
    work.rowwise() += (g / epsilon).transpose();
    mx_r = work.rowwise().maxCoeff();
    work.colwise() -= mx_r;
    sums_r = work.array().exp().rowwise().sum();
    f = -epsilon * (mx_r.array() + log_b + sums_r.array().log()).matrix();

    work = (-cost) / epsilon;
    work.colwise() += f / epsilon;
    mx_c = work.colwise().maxCoeff().transpose();
    work.rowwise() -= mx_c.transpose();
    sums_c = work.array().exp().colwise().sum().transpose();
    g = -epsilon * (mx_c.array() + log_a + sums_c.array().log()).matrix();
    res.iterations = it + 1;

    // The g-update satisfies the column marginal exactly; check the full
    // violation every few sweeps to keep the hot loop at two LSE passes.
    if (it % 5 == 4 || it + 1 == cfg.max_iter) {
      res.marginal_err = marginal_violation();
      if (res.marginal_err < cfg.tol) {
        res.converged = true;
        break;
      }
    }
  }
  res.value = f.mean() + g.mean();
  return res;
}

}  // namespace detail

// S_eps(X, Y) = OT_eps(X, Y) - OT_eps(X, X)/2 - OT_eps(Y, Y)/2.
// The pair is ordered canonically first so the result is symmetric in its
// arguments by construction.
inline SinkhornReport sinkhorn_divergence(const ParticleSet& xs,
                                          const ParticleSet& ys,
                                          double epsilon,
                                          const SinkhornConfig& cfg = {}) {
  if (xs.dim() != ys.dim())
    throw NumericError("sinkhorn_divergence: dimension mismatch");
  if (!(epsilon > 0.0))
    throw NumericError("sinkhorn_divergence: degenerate epsilon");

  const Matrix* x = &xs.points;
  const Matrix* y = &ys.points;
  auto lex_less = [](const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) return a.rows() < b.rows();
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (a(i) != b(i)) return a(i) < b(i);
    }
    return false;
  };
  if (lex_less(*y, *x)) std::swap(x, y);

  SinkhornReport rep;
  rep.epsilon = epsilon;
  const bool identical =
      x->rows() == y->rows() && x->cols() == y->cols() &&
      (x->array() == y->array()).all();
  if (identical) return rep;  // S(X, X) is identically zero
  const auto xy = detail::ot_entropic(*x, *y, epsilon, cfg);
  const auto xx = detail::ot_entropic(*x, *x, epsilon, cfg);
  const auto yy = detail::ot_entropic(*y, *y, epsilon, cfg);
  rep.divergence = xy.value - 0.5 * xx.value - 0.5 * yy.value;
  rep.iterations = std::max({xy.iterations, xx.iterations, yy.iterations});
  rep.marginal_err =
      std::max({xy.marginal_err, xx.marginal_err, yy.marginal_err});
  rep.converged = xy.converged && xx.converged && yy.converged;
  return rep;
}

// Exact W1 between two binned measures: integral of |CDF_a - CDF_b| over the
// union grid (the CDFs are right-continuous step functions, so the rectangle
// sum below is exact).
inline double wasserstein1_1d(const Histogram1D& a, const Histogram1D& b) {
  const CdfTable ca = histogram_cdf(a), cb = histogram_cdf(b);
  std::vector<double> grid;
  grid.reserve(ca.centers.size() + cb.centers.size());
  grid.insert(grid.end(), ca.centers.begin(), ca.centers.end());
  grid.insert(grid.end(), cb.centers.begin(), cb.centers.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  auto step_cdf = [](const CdfTable& t, double x) {
    const auto it = std::upper_bound(t.centers.begin(), t.centers.end(), x);
    if (it == t.centers.begin()) return 0.0;
    return t.cum[static_cast<std::size_t>(it - t.centers.begin()) - 1];
  };

  double w1 = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    w1 += std::abs(step_cdf(ca, grid[i]) - step_cdf(cb, grid[i])) *
          (grid[i + 1] - grid[i]);
  return w1;
}

// W1 between two sample sets via a shared fine grid.
inline double wasserstein1_1d_samples(const std::vector<double>& a,
                                      const std::vector<double>& b,
                                      int nb_bins = 2000) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : a) { lo = std::min(lo, v); hi = std::max(hi, v); }
  for (double v : b) { lo = std::min(lo, v); hi = std::max(hi, v); }
  const double pad = 1e-9 * std::max(1.0, hi - lo);
  return wasserstein1_1d(build_histogram(a, nb_bins, lo - pad, hi + pad),
                         build_histogram(b, nb_bins, lo - pad, hi + pad));
}

}  // namespace cmf
