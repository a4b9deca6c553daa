#include "cmf/cmfgen.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "cmf/gaussian.hpp"

namespace {

using cmf::Activation;
using cmf::cmfgen_init_state;
using cmf::cmfgen_step;
using cmf::cmfgen_train;
using cmf::DatasetSpec;
using cmf::IcnnArch;
using cmf::Matrix;
using cmf::TrainConfig;
using cmf::Vector;

IcnnArch tiny_arch(Eigen::Index d) {
  IcnnArch arch;
  arch.input_dim = d;
  arch.hidden = {16, 16};
  arch.activation = Activation::kElu;
  arch.quadratic_rank = 2;
  return arch;
}

TrainConfig quick_cfg(Eigen::Index batch, long steps, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.batch_size = batch;
  cfg.total_steps = steps;
  cfg.lmc_steps_per_iter = 20;
  cfg.tau_scale = 0.25;  // keep the Euler chain bias small in these checks
  cfg.seed = seed;
  return cfg;
}

DatasetSpec gaussian_spec(const Vector& mean, const Matrix& cov) {
  DatasetSpec spec;
  spec.name = "gaussian";
  spec.gauss_mean = mean;
  spec.gauss_cov = cov;
  return spec;
}

TEST(CmfgenStep, NearSymmetricConfigurationHasSmallLoss) {
  const auto arch = tiny_arch(2);
  auto cfg = quick_cfg(1024, 1, 7);
  cfg.lmc_steps_per_iter = 10;
  cfg.tau_scale = 0.05;  // near-unbiased chain, so the pool stays ~ N(0, I)
  auto st = cmfgen_init_state(arch, cfg);
  // Target N(0, I) equals the initial Gibbs factor; both loss terms estimate
  // E w over nearly identical distributions.
  const auto batch =
      cmf::sample_dataset([&] {
        auto s = gaussian_spec(Vector::Zero(2), Matrix::Identity(2, 2));
        s.n = 1024;
        s.seed = 3;
        return s;
      }());
  const auto metrics = cmfgen_step(st, batch, cfg);
  EXPECT_LE(std::abs(metrics.loss), 0.1);
  EXPECT_GT(metrics.tau, 0.0);
}

TEST(CmfgenStep, ProjectionKeepsConstrainedWeightsNonnegative) {
  const auto arch = tiny_arch(1);
  const auto cfg = quick_cfg(128, 5, 11);
  auto st = cmfgen_init_state(arch, cfg);
  for (long s = 0; s < 5; ++s) {
    auto spec = gaussian_spec(Vector::Zero(1), 2.0 * Matrix::Identity(1, 1));
    spec.n = 128;
    spec.seed = 100 + static_cast<std::uint64_t>(s);
    cmfgen_step(st, cmf::sample_dataset(spec), cfg);
  }
  for (std::size_t l = 1; l < st.params.v.size(); ++l)
    EXPECT_GE(st.params.v[l].minCoeff(), 0.0);
  EXPECT_GE(st.params.v_out.minCoeff(), 0.0);
  EXPECT_GE(st.params.quad_scale, 0.0);
}

TEST(CmfgenTrain, EqualSeedsGiveIdenticalHistories) {
  auto spec = gaussian_spec(Vector::Zero(1), Matrix::Identity(1, 1));
  const auto arch = tiny_arch(1);
  const auto cfg = quick_cfg(64, 8, 21);
  const auto a = cmfgen_train(spec, arch, cfg);
  const auto b = cmfgen_train(spec, arch, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    ASSERT_EQ(a.history[i].loss, b.history[i].loss);
    ASSERT_EQ(a.history[i].tau, b.history[i].tau);
  }
  auto va = cmf::tensor_views(const_cast<cmf::IcnnParams&>(a.params));
  auto vb = cmf::tensor_views(const_cast<cmf::IcnnParams&>(b.params));
  for (std::size_t k = 0; k < va.size(); ++k)
    for (Eigen::Index i = 0; i < va[k].size; ++i)
      ASSERT_EQ(va[k].data[i], vb[k].data[i]);
}

TEST(CmfgenTrain, IdentityFixedPointStaysNearIdentity) {
  // Target N(0, I): the conjugate potential is |x|^2/2 and the init already
  // sits at the fixed point, so the learned map must stay near the identity.
  auto spec = gaussian_spec(Vector::Zero(2), Matrix::Identity(2, 2));
  const auto arch = tiny_arch(2);
  auto cfg = quick_cfg(256, 400, 31);
  cfg.tau_scale = 0.1;
  const auto result = cmfgen_train(spec, arch, cfg);

  auto probe_spec = spec;
  probe_spec.n = 512;
  probe_spec.seed = 99;
  const auto probes = cmf::sample_dataset(probe_spec);
  const Matrix grads = cmf::icnn_grad_batch(
      result.params, cmf::icnn_forward_batch(result.params, probes.points, 1));
  const double err =
      (grads - probes.points).rowwise().squaredNorm().mean();
  EXPECT_LE(err, 0.05);
}

TEST(CmfgenTrain, OneDimensionalGaussianTracksCubeRootLaw) {
  // Target N(0, 4) in d=1: the conjugate Gibbs factor is N(0, 4^{1/3}).
  // Desk-scale run with a reduced-bias chain; generous convergence band.
  auto spec = gaussian_spec(Vector::Zero(1), 4.0 * Matrix::Identity(1, 1));
  const auto arch = tiny_arch(1);
  auto cfg = quick_cfg(512, 2500, 41);
  cfg.tau_scale = 0.25;
  cfg.adam.lr = 1e-3;  // desk-scale run: cover the 1 -> 4^{-1/3} distance
  const auto result = cmfgen_train(spec, arch, cfg);

  // Fresh small-step LMC draw from the learned Gibbs factor.
  const cmf::IcnnPotential pot(result.params);
  cmf::LmcConfig lmc;
  lmc.n_steps = 4000;
  lmc.seed = 5;
  lmc.step_size = 0.1 * cmf::lmc_step_size(
                            pot, result.final_state.particles);
  const auto gibbs =
      cmf::lmc_sample(pot, 20000, 1, lmc);
  const double var =
      (gibbs.points.array() - gibbs.points.mean()).square().mean();
  EXPECT_GE(var, 1.35);
  EXPECT_LE(var, 1.85);
}

TEST(CmfgenCheckpoint, RoundTripsThroughJson) {
  const auto arch = tiny_arch(2);
  const auto cfg = quick_cfg(64, 2, 51);
  auto spec = gaussian_spec(Vector::Zero(2), Matrix::Identity(2, 2));
  const auto result = cmfgen_train(spec, arch, cfg);
  const std::string stem = ::testing::TempDir() + "ckpt";
  cmf::save_checkpoint(result.final_state, stem);
  const auto loaded = cmf::icnn_load(stem + ".model.json");
  Matrix xs(8, 2);
  cmf::fill_normal(xs, cmf::RngKey::from_seed(52));
  const Vector va = cmf::icnn_value_batch(result.params, xs);
  const Vector vb = cmf::icnn_value_batch(loaded, xs);
  for (Eigen::Index i = 0; i < va.size(); ++i) EXPECT_EQ(va(i), vb(i));
  const auto particles = cmf::read_particles_csv(stem + ".particles.csv");
  EXPECT_EQ(particles.size(), 64);
}

}  // namespace
