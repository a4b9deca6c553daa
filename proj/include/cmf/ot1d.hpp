// Closed-form 1D optimal transport and the two fixed-point factorizations.
//
// In 1D the Brenier map between measures mu and nu is the monotone
// rearrangement C_nu^{-1} o C_mu. Both factorization loops exploit this:
//
//   moment     u_{t+1} = Brenier(Gibbs_{u_t}, rho):   grid holds Gibbs_u,
//              map(grid) = Q_rho(C_gibbs), u = cumtrapz(map),
//              weights   = softmax(-u) * mass           (deterministic loop)
//
//   conjugate  w_{t+1} = Brenier(rho, Gibbs_{w_t}):    grid holds rho,
//              map(grid) = Q_source(C_rho), w = cumtrapz(map),
//              weights   = softmax(-w) * mass, then the source sample pool is
//              redrawn from the new Gibbs histogram (and optionally
//              recentered, as in the reference run).
//
// The returned map is always the generative one (Gibbs -> rho): Q_rho o
// C_gibbs on the grid, which for the conjugate loop is the monotone inverse
// of grad w.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <vector>

#include "cmf/histogram.hpp"
#include "cmf/rng.hpp"
#include "cmf/types.hpp"

namespace cmf {

// Monotone transport map sampled on a grid: values[i] = T(positions[i]).
struct Map1D {
  std::vector<double> positions;
  std::vector<double> values;

  // Piecewise-linear evaluation, clamped outside the grid.
  double operator()(double x) const {
    if (x <= positions.front()) return values.front();
    if (x >= positions.back()) return values.back();
    const auto it =
        std::upper_bound(positions.begin(), positions.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - positions.begin());
    const double t =
        (x - positions[j - 1]) / (positions[j] - positions[j - 1]);
    return values[j - 1] + t * (values[j] - values[j - 1]);
  }
};

struct Factorization1D {
  std::vector<double> positions;  // shared grid (bin centers)
  std::vector<double> potential;  // w or u, anchored to 0 at the center nearest 0
  Histogram1D gibbs;              // softmax(-potential) * mass on the grid
  Map1D map;                      // generative map (grad w* resp. grad u)
  int iterations = 0;
  bool converged = false;
};

struct FixedPointConfig {
  int nb_bins = 100000;
  double lo = -4.0, hi = 4.0;
  int iters = 300;
  bool recenter = true;    // conjugate loop only
  std::uint64_t seed = 0;
  double tol_factor = 1e-6;  // converged when sup|dpotential| < tol_factor*(hi-lo)
};

inline FixedPointConfig default_conjugate_config() {
  return FixedPointConfig{100000, -4.0, 4.0, 300, true, 0, 1e-6};
}

inline FixedPointConfig default_moment_config() {
  return FixedPointConfig{100000, -11.0, 11.0, 300, true, 0, 1e-6};
}

// Brenier map from a binned source onto an empirical target:
// values[i] = Q_target(C_source(centers[i])).
inline Map1D ot_map_1d(const Histogram1D& source,
                       const std::vector<double>& target_samples) {
  if (target_samples.empty()) throw NumericError("ot_map_1d: empty target");
  const CdfTable cdf = histogram_cdf(source);
  const QuantileTable q(target_samples);
  Map1D map;
  map.positions = source.centers;
  map.values.resize(cdf.cum.size());
  for (std::size_t i = 0; i < cdf.cum.size(); ++i) map.values[i] = q(cdf.cum[i]);
  return map;
}

namespace detail {

inline std::vector<double> softmax_weights(const std::vector<double>& potential,
                                           double total_mass) {
  double max_neg = -std::numeric_limits<double>::infinity();
  for (double u : potential) max_neg = std::max(max_neg, -u);
  std::vector<double> w(potential.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(-potential[i] - max_neg);
    sum += w[i];
  }
  for (double& x : w) x *= total_mass / sum;
  return w;
}

inline void anchor_at_origin(const std::vector<double>& positions,
                             std::vector<double>& potential) {
  std::size_t anchor = 0;
  for (std::size_t i = 1; i < positions.size(); ++i)
    if (std::abs(positions[i]) < std::abs(positions[anchor])) anchor = i;
  const double shift = potential[anchor];
  for (double& u : potential) u -= shift;
}

inline double sup_diff(const std::vector<double>& a,
                       const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// n draws from the discrete measure (centers, weights), lower-quantile
// inversion of the cumulative weights.
inline std::vector<double> resample_histogram(const Histogram1D& h,
                                              std::size_t n, RngKey key) {
  std::vector<double> cum(h.weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < h.weights.size(); ++i) {
    acc += h.weights[i];
    cum[i] = acc;
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform1(key, i) * acc;
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    out[i] =
        h.centers[std::min<std::size_t>(it - cum.begin(), cum.size() - 1)];
  }
  return out;
}

inline Map1D generative_map(const Histogram1D& gibbs,
                            const QuantileTable& target_quantiles) {
  const CdfTable cdf = histogram_cdf(gibbs);
  Map1D map;
  map.positions = gibbs.centers;
  map.values.resize(cdf.cum.size());
  for (std::size_t i = 0; i < cdf.cum.size(); ++i)
    map.values[i] = target_quantiles(cdf.cum[i]);
  return map;
}

}  // namespace detail

// Conjugate fixed point w_{t+1} = Brenier(rho, Gibbs_{w_t}), run on binned
// target samples. The source pool starts as standard normal draws and is
// redrawn from the Gibbs histogram after every update.
inline Factorization1D fixed_point_conjugate_1d(
    const std::vector<double>& target_samples, const FixedPointConfig& cfg) {
  if (cfg.iters < 1) throw NumericError("fixed_point_conjugate_1d: iters >= 1");
  const Histogram1D target_hist =
      build_histogram(target_samples, cfg.nb_bins, cfg.lo, cfg.hi);
  int occupied = 0;
  for (double w : target_hist.weights)
    if (w > 0.0) ++occupied;
  if (occupied < 2)
    throw NumericError("fixed_point_conjugate_1d: target too concentrated for grid");

  const CdfTable target_cdf = histogram_cdf(target_hist);
  const double mass = target_hist.total_mass();
  const std::size_t n_source = target_samples.size();
  const RngKey key = RngKey::from_seed(cfg.seed);

  std::vector<double> source(n_source);
  {
    Matrix z(static_cast<Eigen::Index>(n_source), 1);
    fill_normal(z, key.fold_in(kStreamInit));
    for (std::size_t i = 0; i < n_source; ++i) source[i] = z(i, 0);
  }

  Factorization1D out;
  out.positions = target_hist.centers;
  std::vector<double> potential(target_hist.centers.size(), 0.0);
  std::vector<double> prev;
  for (int t = 0; t < cfg.iters; ++t) {
    const QuantileTable source_q(source);
    std::vector<double> grad_w(target_cdf.cum.size());
    for (std::size_t i = 0; i < grad_w.size(); ++i)
      grad_w[i] = source_q(target_cdf.cum[i]);
    potential = cumtrapz(out.positions, grad_w);
    detail::anchor_at_origin(out.positions, potential);

    out.gibbs = Histogram1D{out.positions,
                            detail::softmax_weights(potential, mass), cfg.lo,
                            cfg.hi};
    out.iterations = t + 1;
    if (!prev.empty() &&
        detail::sup_diff(potential, prev) < cfg.tol_factor * (cfg.hi - cfg.lo)) {
      out.converged = true;
      break;
    }
    prev = potential;

    source = detail::resample_histogram(
        out.gibbs, n_source,
        key.fold_in(kStreamResample).fold_in(static_cast<std::uint64_t>(t)));
    if (cfg.recenter) {
      double m = 0.0;
      for (double x : source) m += x;
      m /= static_cast<double>(n_source);
      for (double& x : source) x -= m;
    }
  }
  out.potential = potential;
  out.map = detail::generative_map(out.gibbs, QuantileTable(target_samples));
  return out;
}

// Moment fixed point u_{t+1} = Brenier(Gibbs_{u_t}, rho). Requires a
// (near-)centered target; the loop itself is deterministic apart from the
// seeded initial N(0,1) histogram.
inline Factorization1D fixed_point_moment_1d(
    const std::vector<double>& target_samples, const FixedPointConfig& cfg) {
  if (cfg.iters < 1) throw NumericError("fixed_point_moment_1d: iters >= 1");
  if (target_samples.empty()) throw NumericError("fixed_point_moment_1d: empty target");
  double mean = 0.0, sq = 0.0;
  for (double x : target_samples) mean += x;
  mean /= static_cast<double>(target_samples.size());
  for (double x : target_samples) sq += (x - mean) * (x - mean);
  const double stddev = std::sqrt(sq / static_cast<double>(target_samples.size()));
  if (std::abs(mean) > 0.05 * std::max(stddev, 1e-12))
    throw NumericError("fixed_point_moment_1d: target not centered (mean " +
                       std::to_string(mean) + ")");

  const RngKey key = RngKey::from_seed(cfg.seed);
  std::vector<double> init(target_samples.size());
  {
    Matrix z(static_cast<Eigen::Index>(init.size()), 1);
    fill_normal(z, key.fold_in(kStreamInit));
    for (std::size_t i = 0; i < init.size(); ++i) init[i] = z(i, 0);
  }
  Histogram1D gibbs = build_histogram(init, cfg.nb_bins, cfg.lo, cfg.hi);
  const double mass = gibbs.total_mass();
  const QuantileTable target_q(target_samples);

  Factorization1D out;
  out.positions = gibbs.centers;
  std::vector<double> potential(gibbs.centers.size(), 0.0);
  std::vector<double> prev;
  for (int t = 0; t < cfg.iters; ++t) {
    const CdfTable cdf = histogram_cdf(gibbs);
    std::vector<double> grad_u(cdf.cum.size());
    for (std::size_t i = 0; i < grad_u.size(); ++i) grad_u[i] = target_q(cdf.cum[i]);
    potential = cumtrapz(out.positions, grad_u);
    detail::anchor_at_origin(out.positions, potential);
    gibbs.weights = detail::softmax_weights(potential, mass);
    out.iterations = t + 1;
    if (!prev.empty() &&
        detail::sup_diff(potential, prev) < cfg.tol_factor * (cfg.hi - cfg.lo)) {
      out.converged = true;
      break;
    }
    prev = potential;
  }
  out.potential = potential;
  out.gibbs = gibbs;
  out.map = detail::generative_map(gibbs, target_q);
  return out;
}

// Draws n Gibbs atoms and pushes them through the generative map.
inline std::vector<double> pushforward_samples(const Factorization1D& f,
                                               std::size_t n,
                                               std::uint64_t seed) {
  const std::vector<double> atoms = detail::resample_histogram(
      f.gibbs, n, RngKey::from_seed(seed).fold_in(kStreamResample));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f.map(atoms[i]);
  return out;
}

inline void write_factorization_csv(const Factorization1D& f,
                                    const std::string& path) {
  std::ofstream os(path);
  if (!os) throw NumericError("cannot open " + path);
  os << "position,potential,gibbs_weight,map_value\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < f.positions.size(); ++i)
    os << f.positions[i] << ',' << f.potential[i] << ',' << f.gibbs.weights[i]
       << ',' << f.map.values[i] << '\n';
}

}  // namespace cmf
