// Sample-based trainer for the conjugate moment potential.
//
// One step realizes a single-optimizer-step approximation of the fixed-point
// iteration w <- Brenier(rho, Gibbs_w):
//
//   1. advance the persistent particle pool y ~ Gibbs_{w_theta} by a few
//      hundred LMC steps, with tau = 1/M estimated on the target minibatch;
//   2. invert the pool through the conjugate solver, x~(y) = grad w*(y),
//      warm-started from each particle's previous solution;
//   3. take one Adam step on L = mean w(x_i) - mean w(x~(y_i)), treating the
//      conjugate points as constants (envelope gradient), then re-project the
//      convexity constraints.
//
// Per-particle warm starts replace the amortization network used at image
// scale: the pool moves slowly between steps, so cached solutions are close.
#pragma once

#include <string>
#include <vector>

#include "cmf/conjugate.hpp"
#include "cmf/datasets.hpp"
#include "cmf/icnn.hpp"
#include "cmf/io.hpp"
#include "cmf/optim.hpp"
#include "cmf/potential.hpp"
#include "cmf/sampling.hpp"

namespace cmf {

struct TrainConfig {
  Eigen::Index batch_size = 1024;
  long total_steps = 50000;
  AdamConfig adam;               // lr 1e-4, betas 0.5/0.5
  int lmc_steps_per_iter = 200;
  double tau_scale = 1.0;        // multiplies the 1/M heuristic
  Eigen::Index tau_probe_count = 64;  // target-batch subsample for M
  ConjugateConfig conj;          // adam-cosine defaults
  std::uint64_t seed = 0;
  long metrics_every = 1;
};

struct StepMetrics {
  long step = 0;
  double loss = 0.0;
  double tau = 0.0;
  double conj_residual_mean = 0.0;
  int conj_iters_max = 0;
};

struct CmfgenState {
  IcnnParams params;
  ParticleSet particles;  // persistent pool ~ Gibbs_{w_theta}
  Matrix conj_cache;      // warm starts, aligned with particles
  AdamState adam;
  long step = 0;
};

inline CmfgenState cmfgen_init_state(const IcnnArch& arch,
                                     const TrainConfig& cfg) {
  CmfgenState st;
  st.params = icnn_init(arch, cfg.seed);
  Matrix pts(cfg.batch_size, arch.input_dim);
  // w starts near |x|^2/2, so Gibbs_w starts near N(0, I).
  fill_normal(pts, RngKey::from_seed(cfg.seed).fold_in(kStreamProbe));
  st.particles = ParticleSet{pts, cfg.seed};
  st.conj_cache = st.particles.points;
  st.adam = AdamState::init(st.params);
  return st;
}

inline StepMetrics cmfgen_step(CmfgenState& st, const ParticleSet& target,
                               const TrainConfig& cfg) {
  if (target.dim() != st.params.arch.input_dim)
    throw NumericError("cmfgen_step: target dimension mismatch");
  const IcnnPotential pot(st.params);
  StepMetrics metrics;
  metrics.step = st.step;

  // tau from the current minibatch (a leading subsample keeps this cheap).
  const Eigen::Index np = std::min<Eigen::Index>(
      cfg.tau_probe_count > 0 ? cfg.tau_probe_count : target.size(),
      target.size());
  const ParticleSet probes{target.points.topRows(np), target.seed};
  double tau;
  try {
    tau = cfg.tau_scale * lmc_step_size(pot, probes);
  } catch (const NumericError& e) {
    throw NumericError("cmfgen step " + std::to_string(st.step) + ": " +
                       e.what());
  }
  metrics.tau = tau;

  LmcConfig lmc;
  lmc.n_steps = cfg.lmc_steps_per_iter;
  lmc.step_size = tau;
  lmc.seed = RngKey::from_seed(cfg.seed)
                 .fold_in(kStreamLmcNoise)
                 .fold_in(static_cast<std::uint64_t>(st.step))
                 .v;
  try {
    st.particles = lmc_run(pot, st.particles, lmc);
  } catch (const NumericError& e) {
    throw NumericError("cmfgen step " + std::to_string(st.step) + ": " +
                       e.what());
  }

  // Conjugate points x~(y), warm-started from the previous step's solutions.
  ConjugateBatchResult conj;
  try {
    conj = conjugate_solve_batch(pot, st.particles.points, st.conj_cache,
                                 cfg.conj);
  } catch (const NumericError& e) {
    throw NumericError("cmfgen step " + std::to_string(st.step) + ": " +
                       e.what());
  }
  st.conj_cache = conj.points;
  metrics.conj_residual_mean = conj.residuals.mean();
  metrics.conj_iters_max = conj.max_iterations;

  // L = mean w(x) - mean w(x~): one combined backprop with +-1/n weights.
  const Eigen::Index n = target.size();
  Matrix joint(n + conj.points.rows(), target.dim());
  joint.topRows(n) = target.points;
  joint.bottomRows(conj.points.rows()) = conj.points;
  Vector coeffs(joint.rows());
  coeffs.head(n).setConstant(1.0 / static_cast<double>(n));
  coeffs.tail(conj.points.rows())
      .setConstant(-1.0 / static_cast<double>(conj.points.rows()));
  const ForwardStash stash = icnn_forward_batch(st.params, joint, 1);
  metrics.loss = coeffs.dot(stash.value);
  const IcnnParams grads = icnn_backprop(st.params, stash, coeffs);

  adam_update(st.params, grads, st.adam, cfg.adam);
  ++st.step;
  return metrics;
}

struct TrainResult {
  IcnnParams params;
  std::vector<StepMetrics> history;
  CmfgenState final_state;
};

// Full training loop with fresh target minibatches drawn from the generator
// every step (the toy targets are sampled, not a fixed finite set).
inline TrainResult cmfgen_train(const DatasetSpec& dataset,
                                const IcnnArch& arch, const TrainConfig& cfg) {
  const Eigen::Index d =
      dataset.name == "gaussian" ? dataset.gauss_mean.size()
                                 : dataset_dim(dataset.name);
  if (d != arch.input_dim)
    throw NumericError("cmfgen_train: dataset/arch dimension mismatch");
  CmfgenState st = cmfgen_init_state(arch, cfg);
  TrainResult out;
  out.history.reserve(
      static_cast<std::size_t>(cfg.total_steps / std::max(1L, cfg.metrics_every)) + 1);
  for (long step = 0; step < cfg.total_steps; ++step) {
    DatasetSpec batch_spec = dataset;
    batch_spec.n = cfg.batch_size;
    batch_spec.seed = RngKey::from_seed(cfg.seed)
                          .fold_in(kStreamDataset)
                          .fold_in(static_cast<std::uint64_t>(step))
                          .v;
    const ParticleSet batch = sample_dataset(batch_spec);
    const StepMetrics m = cmfgen_step(st, batch, cfg);
    if (step % std::max(1L, cfg.metrics_every) == 0) out.history.push_back(m);
  }
  out.params = st.params;
  out.final_state = std::move(st);
  return out;
}

// Checkpoint = model JSON + particle CSV + optimizer-state JSON.
inline void save_checkpoint(const CmfgenState& st, const std::string& stem) {
  icnn_save(st.params, stem + ".model.json");
  write_particles_csv(st.particles, stem + ".particles.csv");
  nlohmann::json opt;
  opt["step"] = st.adam.step;
  opt["m"] = icnn_to_json(st.adam.m)["params"];
  opt["v"] = icnn_to_json(st.adam.v)["params"];
  std::ofstream os(stem + ".optim.json");
  if (!os) throw NumericError("cannot open " + stem + ".optim.json");
  os << opt.dump(2) << '\n';
}

inline void write_metrics_jsonl(const std::vector<StepMetrics>& history,
                                const std::string& path) {
  std::ofstream os(path);
  if (!os) throw NumericError("cannot open " + path);
  for (const auto& m : history) {
    os << nlohmann::json{{"step", m.step},
                         {"loss", m.loss},
                         {"tau", m.tau},
                         {"conj_residual_mean", m.conj_residual_mean},
                         {"conj_iters_max", m.conj_iters_max}}
              .dump()
       << '\n';
  }
}

// Generation pipeline: LMC draws from Gibbs_w, then grad w* via the
// conjugate solver maps them onto the data distribution.
inline ParticleSet cmfgen_generate(const IcnnParams& params, Eigen::Index n,
                                   int lmc_steps, std::uint64_t seed,
                                   double tau = 0.0,
                                   const ConjugateConfig& conj = {}) {
  const IcnnPotential pot(params);
  LmcConfig lmc;
  lmc.n_steps = lmc_steps;
  lmc.seed = seed;
  if (tau > 0.0) {
    lmc.step_size = tau;
  } else {
    Matrix probe(std::min<Eigen::Index>(n, 256), params.arch.input_dim);
    fill_uniform(probe, RngKey::from_seed(seed).fold_in(kStreamProbe), -1.0,
                 1.0);
    lmc.step_size = lmc_step_size(pot, ParticleSet{probe, seed});
  }
  const ParticleSet gibbs =
      lmc_sample(pot, n, params.arch.input_dim, lmc);
  const auto conj_res =
      conjugate_solve_batch(pot, gibbs.points, gibbs.points, conj);
  return ParticleSet{conj_res.points, seed};
}

}  // namespace cmf
