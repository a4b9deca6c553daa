// Langevin Monte Carlo targeting the Gibbs factor Gamma_w ~ exp(-w):
//
//   x <- x - tau grad w(x) + sqrt(2 tau) z,   z ~ N(0, I)
//
// with the adaptive step tau = 1 / M, M the largest Hessian eigenvalue of w
// over a probe batch. Note the Euler chain has an O(tau) stationary bias: for
// a quadratic potential lambda x^2 / 2 its stationary variance is exactly
// (1/lambda) / (1 - tau lambda / 2), so tau = 1/M inflates the top direction
// by 2x. Callers that need unbiased draws pass a smaller explicit step.
#pragma once

#include <cmath>
#include <functional>

#include "cmf/rng.hpp"
#include "cmf/types.hpp"

namespace cmf {

struct LmcConfig {
  int n_steps = 10000;
  double step_size = 0.0;  // <= 0 means "resolve via lmc_step_size"
  std::uint64_t seed = 0;
  // Test hook: when set, called as noise_hook(step, z) to overwrite the
  // standard-normal increments for that step.
  std::function<void(int, Matrix&)> noise_hook;
};

// 1 / max_i lambda_max(Hess w(x_i)) over the probe batch, each eigenvalue by
// power iteration (50 iterations, tol 1e-8) on the per-point Hessian.
template <class Potential>
double lmc_step_size(const Potential& w, const ParticleSet& probes) {
  if (probes.size() == 0) throw NumericError("lmc_step_size: empty probe batch");
  const auto hessians = w.hessian_batch(probes.points);
  const Eigen::Index d = probes.dim();
  const RngKey key = RngKey::from_seed(0xb1a5edULL);
  Matrix v0m(d, 1);
  fill_normal(v0m, key);
  double m_max = 0.0;
  for (const Matrix& h : hessians) {
    Vector v = v0m.col(0).normalized();
    double lam = 0.0;
    for (int it = 0; it < 50; ++it) {
      Vector hv = h * v;
      const double lam_next = v.dot(hv);
      const double norm = hv.norm();
      if (norm < 1e-300) {
        lam = 0.0;
        break;
      }
      v = hv / norm;
      if (std::abs(lam_next - lam) <= 1e-8 * std::max(1.0, std::abs(lam_next))) {
        lam = lam_next;
        break;
      }
      lam = lam_next;
    }
    m_max = std::max(m_max, lam);
  }
  if (!(m_max > 1e-12)) throw NumericError("lmc_step_size: flat potential");
  return 1.0 / m_max;
}

// Runs the Euler chain for cfg.n_steps; deterministic given cfg.seed (noise
// is addressed by (seed, step, particle, coordinate), independent of any
// execution order).
template <class Potential>
ParticleSet lmc_run(const Potential& w, const ParticleSet& init,
                    const LmcConfig& cfg) {
  if (cfg.n_steps < 1) throw NumericError("lmc_run: n_steps >= 1");
  check_finite(init.points, "lmc_run init");
  double tau = cfg.step_size;
  if (!(tau > 0.0)) tau = lmc_step_size(w, init);
  const double noise_scale = std::sqrt(2.0 * tau);
  const RngKey key = RngKey::from_seed(cfg.seed).fold_in(kStreamLmcNoise);

  Matrix x = init.points;
  Matrix z(x.rows(), x.cols());
  for (int step = 0; step < cfg.n_steps; ++step) {
    if (cfg.noise_hook) {
      z.setZero();
      cfg.noise_hook(step, z);
    } else {
      fill_normal(z, key.fold_in(static_cast<std::uint64_t>(step)));
    }
    x -= tau * w.grad_batch(x);
    x += noise_scale * z;
    if (x.cwiseAbs().maxCoeff() > 1e6)
      throw NumericError("LMC diverged at step " + std::to_string(step) +
                         " - check tau");
  }
  return ParticleSet{std::move(x), cfg.seed};
}

// Fresh chain from uniform noise on [-1,1]^d (the generation-time default).
template <class Potential>
ParticleSet lmc_sample(const Potential& w, Eigen::Index n, Eigen::Index d,
                       const LmcConfig& cfg) {
  Matrix x0(n, d);
  fill_uniform(x0, RngKey::from_seed(cfg.seed).fold_in(kStreamInit), -1.0, 1.0);
  return lmc_run(w, ParticleSet{std::move(x0), cfg.seed}, cfg);
}

}  // namespace cmf
