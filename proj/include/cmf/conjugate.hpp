// Legendre conjugate solver: grad w*(y) = argmax_x <x,y> - w(x) for convex w
// (the envelope theorem turns the conjugate into a concave maximization).
// The default configuration is Adam with a cosine-decayed step, which is also
// what the trainers use; a plain gradient-ascent mode with backtracking is
// available as well.
#pragma once

#include <cmath>
#include <utility>

#include "cmf/types.hpp"

namespace cmf {

enum class ConjugateOptimizer { kAdamCosine, kGradientAscent };

struct ConjugateConfig {
  int max_iters = 100;
  double tol = -1.0;  // < 0 means the 1e-6 (1 + |y|) default
  ConjugateOptimizer optimizer = ConjugateOptimizer::kAdamCosine;
  double init_lr = 0.1;
  double final_lr_fraction = 1e-4;  // cosine floor, as a fraction of init_lr
  double beta1 = 0.9;
  double beta2 = 0.999;
};

struct ConjugateResult {
  Vector point;          // grad w*(y)
  double value = 0.0;    // w*(y) = <point, y> - w(point)
  double grad_residual = 0.0;  // |y - grad w(point)|
  int iterations = 0;
  bool converged = false;
};

struct ConjugateBatchResult {
  Matrix points;
  Vector values;
  Vector residuals;
  Eigen::VectorXi iterations;
  int max_iterations = 0;
  bool all_converged = false;
};

namespace detail {

inline double cosine_lr(const ConjugateConfig& cfg, int k) {
  const double t = cfg.max_iters > 1
                       ? static_cast<double>(k) / (cfg.max_iters - 1)
                       : 1.0;
  const double alpha = cfg.final_lr_fraction;
  return cfg.init_lr * ((1.0 - alpha) * 0.5 * (1.0 + std::cos(M_PI * t)) + alpha);
}

}  // namespace detail

// Batched ascent on phi(x) = <x, y_i> - w(x) per row. Rows that reach their
// tolerance are compacted out of the working set (warm-started batches shed
// most rows within a few iterations), and the best iterate seen per row is
// returned (Adam may pass through the optimum and drift slightly).
template <class Potential>
ConjugateBatchResult conjugate_solve_batch(const Potential& w, const Matrix& y,
                                           const Matrix& init,
                                           const ConjugateConfig& cfg) {
  if (cfg.max_iters < 1) throw NumericError("conjugate_solve: max_iters >= 1");
  const Eigen::Index n = y.rows(), d = y.cols();
  if (init.rows() != n || init.cols() != d)
    throw NumericError("conjugate_solve: init shape mismatch");

  Vector tol(n);
  for (Eigen::Index i = 0; i < n; ++i)
    tol(i) = cfg.tol >= 0 ? cfg.tol : 1e-6 * (1.0 + y.row(i).norm());

  Matrix best_x = init;
  Vector best_res = Vector::Constant(n, std::numeric_limits<double>::infinity());
  Eigen::VectorXi iters = Eigen::VectorXi::Zero(n);

  // Working set: rows still iterating, stored compactly.
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
  Matrix x = init, ys = y;
  Matrix m = Matrix::Zero(n, d), v = Matrix::Zero(n, d);
  Vector ga_step = Vector::Constant(n, cfg.init_lr);  // gradient-ascent mode

  for (int it = 0; it <= cfg.max_iters && !rows.empty(); ++it) {
    Matrix g = ys - w.grad_batch(x);
    if (!g.allFinite()) throw NumericError("divergent conjugate ascent");
    Vector res = g.rowwise().norm();

    // Record bests and compact out converged rows.
    std::vector<Eigen::Index> keep;
    keep.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Eigen::Index kk = static_cast<Eigen::Index>(k);
      const Eigen::Index i = rows[k];
      if (res(kk) < best_res(i)) {
        best_res(i) = res(kk);
        best_x.row(i) = x.row(kk);
      }
      if (res(kk) > tol(i)) {
        keep.push_back(kk);
        iters(i) = it + 1;
      }
    }
    if (keep.empty() || it == cfg.max_iters) break;
    if (keep.size() != rows.size()) {
      const Eigen::Index nk = static_cast<Eigen::Index>(keep.size());
      Matrix x2(nk, d), y2(nk, d), m2(nk, d), v2(nk, d), g2(nk, d);
      Vector gs2(nk);
      std::vector<Eigen::Index> rows2(static_cast<std::size_t>(nk));
      for (Eigen::Index k = 0; k < nk; ++k) {
        const Eigen::Index src = keep[static_cast<std::size_t>(k)];
        x2.row(k) = x.row(src);
        y2.row(k) = ys.row(src);
        m2.row(k) = m.row(src);
        v2.row(k) = v.row(src);
        g2.row(k) = g.row(src);
        gs2(k) = ga_step(src);
        rows2[static_cast<std::size_t>(k)] = rows[static_cast<std::size_t>(src)];
      }
      x = std::move(x2);
      ys = std::move(y2);
      m = std::move(m2);
      v = std::move(v2);
      g = std::move(g2);
      ga_step = std::move(gs2);
      rows = std::move(rows2);
    }

    if (cfg.optimizer == ConjugateOptimizer::kAdamCosine) {
      const double lr = detail::cosine_lr(cfg, it);
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = (cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square())
              .matrix();
      const double bc1 = 1.0 - std::pow(cfg.beta1, it + 1);
      const double bc2 = 1.0 - std::pow(cfg.beta2, it + 1);
      x.array() += lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + 1e-12);
    } else {
      // Steepest ascent with a parabolic line search: one probe along the
      // gradient ray estimates its curvature q = g' H_w g, and the ray
      // maximizer s* = |g|^2 / q is taken (exact line search for quadratic
      // potentials). A monotonicity guard falls back to halving, so the
      // objective never decreases across accepted iterations.
      const Vector phi =
          (x.cwiseProduct(ys)).rowwise().sum() - w.value_batch(x);
      for (Eigen::Index k = 0; k < x.rows(); ++k) {
        const double gsq = g.row(k).squaredNorm();
        if (!(gsq > 0.0)) continue;
        const double s_probe = ga_step(k);
        auto phi_at = [&](double s) {
          const Matrix cand = x.row(k) + s * g.row(k);
          return cand.cwiseProduct(ys.row(k)).sum() - w.value_batch(cand)(0);
        };
        const double phi_probe = phi_at(s_probe);
        const double q =
            2.0 * (phi(k) + s_probe * gsq - phi_probe) / (s_probe * s_probe);
        double step;
        if (q > 1e-300 * gsq) {
          step = gsq / q;  // ray maximizer of the fitted parabola
        } else {
          step = 2.0 * s_probe;  // flat or ascending ray: grow the step
        }
        double phi_step = phi_at(step);
        for (int back = 0; back < 40 && phi_step < phi(k); ++back) {
          step *= 0.5;
          phi_step = phi_at(step);
        }
        if (phi_step >= phi(k)) {
          x.row(k) += step * g.row(k);
          ga_step(k) = std::max(step, 1e-12);
        }
      }
    }
  }

  ConjugateBatchResult out;
  out.points = best_x;
  out.residuals = best_res;
  out.values =
      (best_x.cwiseProduct(y)).rowwise().sum() - w.value_batch(best_x);
  out.iterations = iters;
  out.max_iterations = iters.size() > 0 ? iters.maxCoeff() : 0;
  out.all_converged = true;
  for (Eigen::Index i = 0; i < n; ++i)
    if (best_res(i) > tol(i)) out.all_converged = false;
  return out;
}

template <class Potential>
ConjugateResult conjugate_solve(const Potential& w, const Vector& y,
                                const Vector& init,
                                const ConjugateConfig& cfg = {}) {
  const auto batch =
      conjugate_solve_batch(w, y.transpose(), init.transpose(), cfg);
  ConjugateResult out;
  out.point = batch.points.row(0).transpose();
  out.value = batch.values(0);
  out.grad_residual = batch.residuals(0);
  out.iterations = batch.iterations(0);
  out.converged = batch.all_converged;
  return out;
}

// Identity warm start (w starts near |x|^2/2 in training, so grad w* ~ id).
template <class Potential>
ConjugateResult conjugate_solve(const Potential& w, const Vector& y,
                                const ConjugateConfig& cfg = {}) {
  return conjugate_solve(w, y, y, cfg);
}

}  // namespace cmf
