#include "cmf/histogram.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "cmf/rng.hpp"
#include "cmf/types.hpp"

namespace {

using cmf::build_histogram;
using cmf::cumtrapz;
using cmf::empirical_quantile;
using cmf::histogram_cdf;
using cmf::Histogram1D;

TEST(BuildHistogram, CountsPerBin) {
  const auto h = build_histogram({0.5, 0.5, 1.5}, 2, 0.0, 2.0);
  ASSERT_EQ(h.centers.size(), 2u);
  EXPECT_DOUBLE_EQ(h.centers[0], 0.5);
  EXPECT_DOUBLE_EQ(h.centers[1], 1.5);
  EXPECT_DOUBLE_EQ(h.weights[0], 2.0);
  EXPECT_DOUBLE_EQ(h.weights[1], 1.0);
}

TEST(BuildHistogram, MassEqualsInRangeCount) {
  Eigen::MatrixXd z(400000, 1);
  cmf::fill_normal(z, cmf::RngKey::from_seed(7));
  std::vector<double> samples(z.data(), z.data() + z.size());
  const auto h = build_histogram(samples, 100000, -4.0, 4.0);
  std::size_t in_range = 0;
  for (double x : samples)
    if (x >= -4.0 && x <= 4.0) ++in_range;
  EXPECT_DOUBLE_EQ(h.total_mass(), static_cast<double>(in_range));
}

TEST(BuildHistogram, PointMassLandsInOneBin) {
  const auto h = build_histogram(std::vector<double>(13, 0.1), 4, 0.0, 1.0);
  int nonzero = 0;
  double mass = 0.0;
  for (double w : h.weights) {
    if (w > 0) ++nonzero;
    mass += w;
  }
  EXPECT_EQ(nonzero, 1);
  EXPECT_DOUBLE_EQ(mass, 13.0);
}

TEST(BuildHistogram, NoMassInRangeIsAnError) {
  EXPECT_THROW(build_histogram({5.0, 6.0}, 4, 0.0, 1.0), cmf::NumericError);
  EXPECT_THROW(build_histogram({}, 4, 0.0, 1.0), cmf::NumericError);
}

TEST(HistogramCdf, NormalizesPrefixSums) {
  Histogram1D h{{0.5, 1.5}, {2.0, 1.0}, 0.0, 2.0};
  const auto t = histogram_cdf(h);
  EXPECT_NEAR(t.cum[0], 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(t.cum[1], 1.0);
}

TEST(HistogramCdf, UniformWeightsGiveArithmeticProgression) {
  const int k = 7;
  Histogram1D h;
  for (int i = 0; i < k; ++i) {
    h.centers.push_back(i + 0.5);
    h.weights.push_back(3.0);
  }
  h.lo = 0; h.hi = k;
  const auto t = histogram_cdf(h);
  for (int i = 0; i < k; ++i)
    EXPECT_NEAR(t.cum[i], static_cast<double>(i + 1) / k, 1e-12);
}

TEST(HistogramCdf, SingleBin) {
  Histogram1D h{{0.0}, {4.0}, -1.0, 1.0};
  const auto t = histogram_cdf(h);
  ASSERT_EQ(t.cum.size(), 1u);
  EXPECT_DOUBLE_EQ(t.cum[0], 1.0);
}

TEST(HistogramCdf, ComposedWithBuildIsMonotoneWithUnitTail) {
  Eigen::MatrixXd z(5000, 1);
  cmf::fill_normal(z, cmf::RngKey::from_seed(3));
  std::vector<double> samples(z.data(), z.data() + z.size());
  const auto t = histogram_cdf(build_histogram(samples, 64, -2.0, 2.0));
  for (std::size_t i = 1; i < t.cum.size(); ++i)
    EXPECT_GE(t.cum[i], t.cum[i - 1]);
  EXPECT_DOUBLE_EQ(t.cum.back(), 1.0);
}

TEST(EmpiricalQuantile, LowerConvention) {
  EXPECT_DOUBLE_EQ(empirical_quantile({1, 2, 3, 4}, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(empirical_quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(empirical_quantile({7}, 0.3), 7.0);
}

TEST(EmpiricalQuantile, EmptyInputIsAnError) {
  EXPECT_THROW(empirical_quantile({}, 0.5), cmf::NumericError);
}

TEST(EmpiricalQuantile, MonotoneInLevel) {
  Eigen::MatrixXd z(257, 1);
  cmf::fill_normal(z, cmf::RngKey::from_seed(11));
  std::vector<double> samples(z.data(), z.data() + z.size());
  const cmf::QuantileTable q(samples);
  double prev = q(0.0);
  for (int i = 1; i <= 100; ++i) {
    const double cur = q(i / 100.0);
    EXPECT_GE(cur, prev);
    prev = cur;
  }
}

TEST(Cumtrapz, MatchesAnalyticIntegralOfX) {
  const auto out = cumtrapz({0, 1, 2}, {0, 1, 2});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_DOUBLE_EQ(out[0], 0.0);
  EXPECT_DOUBLE_EQ(out[1], 0.5);
  EXPECT_DOUBLE_EQ(out[2], 2.0);
}

TEST(Cumtrapz, ConstantIntegrandOverUnitInterval) {
  std::vector<double> pos, val;
  for (int i = 0; i <= 10; ++i) {
    pos.push_back(i / 10.0);
    val.push_back(2.5);
  }
  EXPECT_NEAR(cumtrapz(pos, val).back(), 2.5, 1e-15);
}

TEST(Cumtrapz, ZeroValuesGiveZeros) {
  for (double v : cumtrapz({0, 0.5, 1.0}, {0, 0, 0})) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Cumtrapz, LengthMismatchIsAnError) {
  EXPECT_THROW(cumtrapz({0, 1}, {0, 1, 2}), cmf::NumericError);
}

// Trapezoid integration is linear in the integrand and exact for integrands
// that are piecewise linear on the grid.
TEST(Cumtrapz, LinearAndExactForPiecewiseLinear) {
  std::vector<double> pos{0.0, 0.3, 1.1, 2.0};
  std::vector<double> a{1.0, -2.0, 0.5, 3.0}, b{0.2, 0.4, -1.0, 2.0};
  const auto ia = cumtrapz(pos, a), ib = cumtrapz(pos, b);
  std::vector<double> combo(4);
  for (int i = 0; i < 4; ++i) combo[i] = 2.0 * a[i] - 3.0 * b[i];
  const auto ic = cumtrapz(pos, combo);
  for (int i = 0; i < 4; ++i)
    EXPECT_NEAR(ic[i], 2.0 * ia[i] - 3.0 * ib[i], 1e-14);

  // f(x) = 4x - 1 integrates to 2x^2 - x exactly at the nodes.
  std::vector<double> lin(4);
  for (int i = 0; i < 4; ++i) lin[i] = 4.0 * pos[i] - 1.0;
  const auto il = cumtrapz(pos, lin);
  for (int i = 0; i < 4; ++i)
    EXPECT_NEAR(il[i], 2.0 * pos[i] * pos[i] - pos[i], 1e-14);
}

}  // namespace
