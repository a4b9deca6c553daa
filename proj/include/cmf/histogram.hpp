// Binned empirical measures on a 1D grid and the CDF/quantile machinery the
// fixed-point solvers are built from.
#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "cmf/types.hpp"

namespace cmf {

// Equal-width binned measure: centers are bin midpoints, weights are
// nonnegative masses. Invariants: strictly increasing centers, sum > 0.
struct Histogram1D {
  std::vector<double> centers;
  std::vector<double> weights;
  double lo = 0.0, hi = 0.0;

  double total_mass() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }

  double mean() const {
    double s = 0.0, m = total_mass();
    for (std::size_t i = 0; i < centers.size(); ++i) s += centers[i] * weights[i];
    return s / m;
  }

  double variance() const {
    const double mu = mean();
    double s = 0.0, m = total_mass();
    for (std::size_t i = 0; i < centers.size(); ++i)
      s += weights[i] * (centers[i] - mu) * (centers[i] - mu);
    return s / m;
  }

  void validate() const {
    if (centers.size() != weights.size() || centers.empty())
      throw NumericError("Histogram1D: centers/weights size mismatch");
    for (std::size_t i = 0; i + 1 < centers.size(); ++i)
      if (!(centers[i] < centers[i + 1]))
        throw NumericError("Histogram1D: centers not strictly increasing");
    double s = 0.0;
    for (double w : weights) {
      if (w < 0.0 || !std::isfinite(w))
        throw NumericError("Histogram1D: negative or non-finite weight");
      s += w;
    }
    if (!(s > 0.0)) throw NumericError("Histogram1D: zero total mass");
  }
};

// cum[i] = P(X <= centers[i]); nondecreasing with cum.back() == 1.
struct CdfTable {
  std::vector<double> centers;
  std::vector<double> cum;
};

// Counts samples into nb_bins equal-width bins over [lo, hi]. Samples outside
// the range are dropped; the closed right edge lands in the last bin.
inline Histogram1D build_histogram(const std::vector<double>& samples,
                                   int nb_bins, double lo, double hi) {
  if (nb_bins < 2) throw NumericError("build_histogram: nb_bins must be >= 2");
  if (!(lo < hi)) throw NumericError("build_histogram: empty range");
  Histogram1D h;
  h.lo = lo;
  h.hi = hi;
  h.centers.resize(nb_bins);
  h.weights.assign(nb_bins, 0.0);
  const double width = (hi - lo) / nb_bins;
  for (int i = 0; i < nb_bins; ++i) h.centers[i] = lo + (i + 0.5) * width;
  std::size_t in_range = 0;
  for (double x : samples) {
    if (x < lo || x > hi || !std::isfinite(x)) continue;
    int idx = static_cast<int>((x - lo) / width);
    if (idx >= nb_bins) idx = nb_bins - 1;
    h.weights[idx] += 1.0;
    ++in_range;
  }
  if (in_range == 0) throw NumericError("build_histogram: no mass in range");
  return h;
}

inline CdfTable histogram_cdf(const Histogram1D& h) {
  h.validate();
  CdfTable t;
  t.centers = h.centers;
  t.cum.resize(h.weights.size());
  const double total = h.total_mass();
  double acc = 0.0;
  for (std::size_t i = 0; i < h.weights.size(); ++i) {
    acc += h.weights[i];
    t.cum[i] = acc / total;
  }
  t.cum.back() = 1.0;
  return t;
}

// Lower empirical quantile over pre-sorted samples: the smallest order
// statistic whose empirical CDF reaches p, i.e. min { x : C(x) >= p }.
// Reused by the fixed-point loops, which sort once and look up many levels.
class QuantileTable {
 public:
  explicit QuantileTable(std::vector<double> samples)
      : sorted_(std::move(samples)) {
    if (sorted_.empty()) throw NumericError("QuantileTable: empty sample set");
    std::sort(sorted_.begin(), sorted_.end());
  }

  double operator()(double p) const {
    if (!(p >= 0.0 && p <= 1.0))
      throw NumericError("QuantileTable: level outside [0,1]");
    const double n = static_cast<double>(sorted_.size());
    auto k = static_cast<std::ptrdiff_t>(std::ceil(p * n));
    if (k < 1) k = 1;
    if (k > static_cast<std::ptrdiff_t>(sorted_.size()))
      k = static_cast<std::ptrdiff_t>(sorted_.size());
    return sorted_[static_cast<std::size_t>(k - 1)];
  }

  const std::vector<double>& sorted() const { return sorted_; }

 private:
  std::vector<double> sorted_;
};

inline double empirical_quantile(const std::vector<double>& samples, double p) {
  return QuantileTable(samples)(p);
}

// Cumulative trapezoid rule with out[0] = 0.
inline std::vector<double> cumtrapz(const std::vector<double>& positions,
                                    const std::vector<double>& values) {
  if (positions.size() != values.size())
    throw NumericError("cumtrapz: length mismatch");
  if (positions.empty()) throw NumericError("cumtrapz: empty input");
  std::vector<double> out(positions.size(), 0.0);
  for (std::size_t i = 1; i < positions.size(); ++i) {
    const double dx = positions[i] - positions[i - 1];
    if (!(dx > 0.0)) throw NumericError("cumtrapz: positions not increasing");
    out[i] = out[i - 1] + 0.5 * (values[i] + values[i - 1]) * dx;
  }
  return out;
}

}  // namespace cmf
