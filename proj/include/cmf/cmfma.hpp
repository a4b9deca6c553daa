// Energy-based trainer: learns the conjugate moment potential of
// rho ~ exp(-E) by regressing the Monge-Ampere identity
//
//   E(x) ~ w(grad w(x)) - ln det Hess w(x) + c
//
// over probe points, where c is a free scalar absorbing both ln C_w and the
// arbitrary additive constant of the supplied energy. Differentiating the
// squared residual needs parameter gradients of grad w and of the Hessian;
// these come from the jet reverse pass.
#pragma once

#include <Eigen/Cholesky>
#include <functional>
#include <string>
#include <vector>

#include "cmf/cmfgen.hpp"
#include "cmf/datasets.hpp"
#include "cmf/icnn.hpp"
#include "cmf/optim.hpp"
#include "cmf/potential.hpp"
#include "cmf/sampling.hpp"

namespace cmf {

struct EnergySpec {
  std::string name;  // E1 | E2 | E3 | mixture1d-rho1 | mixture1d-rho1-prose |
                     // mixture1d-rho2 | gaussian-quadratic | custom
  Matrix box;        // d x 2 rows of (lo, hi); defaulted per name when empty
  Vector gauss_mean;  // gaussian-quadratic only
  Matrix gauss_cov;
  std::function<double(const Vector&)> custom;
  // Additive constant applied on top of the closed forms; the mixture
  // energies are exactly -ln(pdf) + constant_shift.
  double constant_shift = 0.0;
};

inline Eigen::Index energy_dim(const EnergySpec& spec) {
  if (spec.name == "E1" || spec.name == "E2" || spec.name == "E3") return 2;
  if (spec.name == "mixture1d-rho1" || spec.name == "mixture1d-rho1-prose" ||
      spec.name == "mixture1d-rho2")
    return 1;
  if (spec.name == "gaussian-quadratic") return spec.gauss_mean.size();
  if (spec.name == "custom") return spec.box.rows();
  throw NumericError("unknown energy: " + spec.name);
}

inline Matrix default_energy_box(const std::string& name, Eigen::Index d) {
  Matrix box(d, 2);
  double b = 10.0;
  if (name == "E2") b = 6.0;
  if (name.rfind("mixture1d", 0) == 0) b = 4.0;
  box.col(0).setConstant(-b);
  box.col(1).setConstant(b);
  return box;
}

inline EnergySpec make_energy(const std::string& name) {
  EnergySpec spec;
  spec.name = name;
  spec.box = default_energy_box(name, energy_dim(spec));
  return spec;
}

inline double builtin_energy(const EnergySpec& spec, const Vector& x) {
  const Eigen::Index d = energy_dim(spec);
  if (x.size() != d) throw NumericError("builtin_energy: dimension mismatch");
  if (spec.box.rows() == d) {
    for (Eigen::Index r = 0; r < d; ++r)
      if (x(r) < spec.box(r, 0) || x(r) > spec.box(r, 1))
        throw NumericError("builtin_energy: point outside the domain box");
  }
  if (spec.name == "E1") {
    const double a = 0.3 * x(0), b = 0.3 * x(1);
    return -6.0 * std::sin(a * a + b * b) + spec.constant_shift;
  }
  if (spec.name == "E2") {
    const double p = x(0) * x(0) + x(1) - 11.0;
    const double q = x(0) + x(1) * x(1) - 7.0;
    return (p * p + q * q) / 100.0 - 2.0 + spec.constant_shift;
  }
  if (spec.name == "E3") {
    const double c1 = std::cos(2.0 * M_PI * x(0) / 10.0 - M_PI / 2.0);
    const double c2 = std::cos(2.0 * M_PI * x(1) / 10.0 - M_PI / 2.0);
    return 3.0 * c1 * c2 + spec.constant_shift;
  }
  if (spec.name.rfind("mixture1d", 0) == 0) {
    const Mixture1D mix = spec.name == "mixture1d-rho1" ? mixture_rho1()
                          : spec.name == "mixture1d-rho1-prose"
                              ? mixture_rho1_prose()
                              : mixture_rho2();
    return -std::log(mix.pdf(x(0))) + spec.constant_shift;
  }
  if (spec.name == "gaussian-quadratic") {
    const Vector diff = x - spec.gauss_mean;
    return 0.5 * diff.dot(spec.gauss_cov.ldlt().solve(diff)) +
           spec.constant_shift;
  }
  if (spec.name == "custom" && spec.custom)
    return spec.custom(x) + spec.constant_shift;
  throw NumericError("unknown energy: " + spec.name);
}

struct MaResidualReport {
  double residual = 0.0;  // energy - w(grad w) + ln det H
  double w_of_grad = 0.0;
  double logdet = 0.0;
  double hessian_min_eig = 0.0;
};

namespace detail {

constexpr double kHessianJitter = 1e-8;

// ln det (H + jitter I) by Cholesky; throws if still not PD.
inline double jittered_logdet(Matrix h) {
  h.diagonal().array() += kHessianJitter;
  Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success)
    throw NumericError("non-convex probe point (Hessian not PD after jitter)");
  double out = 0.0;
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    out += std::log(llt.matrixL()(i, i));
  return 2.0 * out;
}

}  // namespace detail

// Pointwise Monge-Ampere residual of the current network against an energy
// value; the free constant is NOT included here (training co-fits it).
inline MaResidualReport ma_residual(const IcnnParams& params, const Vector& x,
                                    double energy_value) {
  const EvalBundle e = icnn_eval(params, x, 2);
  MaResidualReport rep;
  rep.w_of_grad = icnn_eval(params, e.gradient, 0).value;
  rep.logdet = detail::jittered_logdet(e.hessian);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(e.hessian);
  rep.hessian_min_eig = eig.eigenvalues().minCoeff();
  rep.residual = energy_value - rep.w_of_grad + rep.logdet;
  return rep;
}

// Unnormalized log density of grad w* # Gibbs_w at x:
//   ln rho(x) + const = -w(grad w(x)) + ln det Hess w(x).
inline double log_density_unnorm(const IcnnParams& params, const Vector& x) {
  const EvalBundle e = icnn_eval(params, x, 2);
  return -icnn_eval(params, e.gradient, 0).value +
         detail::jittered_logdet(e.hessian);
}

enum class ProbeMode { kUniformBox, kLmcSelf };

struct CmfmaMetrics {
  long step = 0;
  double loss = 0.0;
  double offset = 0.0;
  double jitter = detail::kHessianJitter;
  double hessian_min_eig = 0.0;
};

struct CmfmaResult {
  IcnnParams params;
  double offset = 0.0;  // fitted c ~ ln C_w + energy constant
  std::vector<CmfmaMetrics> history;
};

// Minimizes mean_i (E(x_i) - w(g_i) + ln det H_i - c)^2 over probe batches.
// Gradients w.r.t. theta flow through g = grad w(x) and H = Hess w(x) via the
// jet reverse pass; c gets its own Adam scalar with a faster rate (it is a
// single well-conditioned offset).
inline CmfmaResult cmfma_train(const EnergySpec& spec, const IcnnArch& arch,
                               const TrainConfig& cfg,
                               ProbeMode probe = ProbeMode::kUniformBox) {
  const Eigen::Index d = energy_dim(spec);
  if (d != arch.input_dim)
    throw NumericError("cmfma_train: energy/arch dimension mismatch");
  const Matrix box =
      spec.box.rows() == d ? spec.box : default_energy_box(spec.name, d);

  IcnnParams params = icnn_init(arch, cfg.seed);
  AdamState adam = AdamState::init(params);
  double offset = 0.0, off_m = 0.0, off_v = 0.0;
  const double offset_lr = 1e-2;

  ParticleSet pool;  // lmc-self probes
  if (probe == ProbeMode::kLmcSelf) {
    Matrix pts(cfg.batch_size, d);
    fill_normal(pts, RngKey::from_seed(cfg.seed).fold_in(kStreamProbe));
    pool = ParticleSet{pts, cfg.seed};
  }

  CmfmaResult out;
  const RngKey key = RngKey::from_seed(cfg.seed);
  for (long step = 0; step < cfg.total_steps; ++step) {
    // Probe batch.
    Matrix x(cfg.batch_size, d);
    if (probe == ProbeMode::kUniformBox) {
      fill_uniform(x, key.fold_in(kStreamProbe)
                          .fold_in(static_cast<std::uint64_t>(step)));
      for (Eigen::Index r = 0; r < d; ++r)
        x.col(r) =
            (box(r, 0) + (box(r, 1) - box(r, 0)) * x.col(r).array()).matrix();
    } else {
      const IcnnPotential pot(params);
      LmcConfig lmc;
      lmc.n_steps = cfg.lmc_steps_per_iter;
      lmc.step_size =
          cfg.tau_scale *
          lmc_step_size(pot, ParticleSet{pool.points.topRows(std::min<Eigen::Index>(
                                 cfg.tau_probe_count, pool.size())),
                             pool.seed});
      lmc.seed = key.fold_in(kStreamLmcNoise)
                     .fold_in(static_cast<std::uint64_t>(step))
                     .v;
      pool = lmc_run(pot, pool, lmc);
      x = pool.points;
      // Keep probes inside the energy's domain box.
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index r = 0; r < d; ++r)
          x(i, r) = std::min(std::max(x(i, r), box(r, 0)), box(r, 1));
    }

    Vector energy(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      energy(i) = builtin_energy(spec, x.row(i).transpose());

    // Pass A: jets at the probes.
    const JetStash jets = icnn_jet_forward(params, x);
    const JetOutputs jo = icnn_jet_outputs(params, jets);

    // Pass B: w and grad w at the gradient points.
    const ForwardStash stash_b = icnn_forward_batch(params, jo.grad, 1);
    const Matrix grad_b = icnn_grad_batch(params, stash_b);

    // Residuals and adjoints.
    const Eigen::Index n = x.rows();
    Vector r(n), logdet(n);
    std::vector<Vector> lam_hess(static_cast<std::size_t>(d * d),
                                 Vector::Zero(n));
    double min_eig = std::numeric_limits<double>::infinity();
    Matrix h(d, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index rr = 0; rr < d; ++rr)
        for (Eigen::Index cc = 0; cc < d; ++cc)
          h(rr, cc) = jo.hess[static_cast<std::size_t>(rr * d + cc)](i);
      h.diagonal().array() += detail::kHessianJitter;
      Eigen::LLT<Matrix> llt(h);
      if (llt.info() != Eigen::Success)
        throw NumericError("cmfma step " + std::to_string(step) +
                           ": non-convex probe point");
      double ld = 0.0;
      for (Eigen::Index k = 0; k < d; ++k)
        ld += std::log(llt.matrixL()(k, k));
      logdet(i) = 2.0 * ld;
      const Matrix h_inv = llt.solve(Matrix::Identity(d, d));
      r(i) = energy(i) - stash_b.value(i) + logdet(i) - offset;
      const double q = 2.0 * r(i) / static_cast<double>(n);
      for (Eigen::Index rr = 0; rr < d; ++rr)
        for (Eigen::Index cc = 0; cc < d; ++cc)
          lam_hess[static_cast<std::size_t>(rr * d + cc)](i) = q * h_inv(rr, cc);
      if (d == 1) {
        min_eig = std::min(min_eig, h(0, 0));
      } else if (d == 2) {
        const double tr = h.trace(), det = h.determinant();
        min_eig = std::min(
            min_eig, 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4 * det))));
      } else {
        min_eig = std::min(min_eig, h.diagonal().minCoeff());
      }
    }
    const Vector q = (2.0 / static_cast<double>(n)) * r;
    const double loss = r.squaredNorm() / static_cast<double>(n);

    // theta gradient: pass-B value path with coeffs -q, plus jet reverse with
    // lam_grad = -q .* grad w(g) and lam_hess = q H^{-1}.
    IcnnParams grads = icnn_backprop(params, stash_b, (-q).eval());
    const Matrix lam_grad = (grad_b.array().colwise() * (-q).array()).matrix();
    const IcnnParams jet_grads = icnn_jet_backprop(
        params, jets, Vector::Zero(n), lam_grad, lam_hess);
    accumulate(grads, jet_grads);
    adam_update(params, grads, adam, cfg.adam);

    // Scalar offset: dL/dc = -mean 2r, with its own Adam moments.
    const double gc = -q.sum();
    off_m = 0.9 * off_m + 0.1 * gc;
    off_v = 0.999 * off_v + 0.001 * gc * gc;
    const double bc1 = 1.0 - std::pow(0.9, step + 1);
    const double bc2 = 1.0 - std::pow(0.999, step + 1);
    offset -= offset_lr * (off_m / bc1) / (std::sqrt(off_v / bc2) + 1e-12);

    if (step % std::max(1L, cfg.metrics_every) == 0) {
      CmfmaMetrics m;
      m.step = step;
      m.loss = loss;
      m.offset = offset;
      m.hessian_min_eig = min_eig;
      out.history.push_back(m);
    }
  }
  out.params = std::move(params);
  out.offset = offset;
  return out;
}

struct ReconstructConfig {
  int max_steps = 500;
  double lr = 1e-2;
  double tol = 1e-6;  // masked-gradient norm
};

// Gradient ascent of the learned log density over the masked coordinates,
// observed coordinates frozen. The masked gradient is taken by central
// differences of log_density_unnorm (only |masked| extra evaluations, and it
// avoids third-derivative propagation through the log-determinant).
inline Vector reconstruct_masked(const IcnnParams& params, const Vector& x0,
                                 const std::vector<bool>& mask,
                                 const ReconstructConfig& cfg = {}) {
  const Eigen::Index d = params.arch.input_dim;
  if (static_cast<Eigen::Index>(mask.size()) != d || x0.size() != d)
    throw NumericError("reconstruct_masked: shape mismatch");
  int n_masked = 0;
  for (bool m : mask) n_masked += m ? 1 : 0;
  if (n_masked == 0 || n_masked == static_cast<int>(mask.size()))
    throw NumericError("reconstruct_masked: need both observed and masked coordinates");

  Vector x = x0;
  for (int step = 0; step < cfg.max_steps; ++step) {
    Vector grad = Vector::Zero(d);
    const double h = 1e-5 * (1.0 + x.norm());
    for (Eigen::Index r = 0; r < d; ++r) {
      if (!mask[static_cast<std::size_t>(r)]) continue;
      Vector xp = x, xm = x;
      xp(r) += h;
      xm(r) -= h;
      grad(r) = (log_density_unnorm(params, xp) -
                 log_density_unnorm(params, xm)) /
                (2.0 * h);
    }
    if (grad.norm() < cfg.tol) break;
    x += cfg.lr * grad;
  }
  return x;
}

}  // namespace cmf
