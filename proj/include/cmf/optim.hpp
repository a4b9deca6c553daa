// Adam over the ICNN parameter record, with the convexity projection applied
// after every step.
#pragma once

#include <cmath>

#include "cmf/icnn.hpp"

namespace cmf {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.5;
  double eps = 1e-8;
};

struct AdamState {
  IcnnParams m, v;
  long step = 0;

  static AdamState init(const IcnnParams& params) {
    return AdamState{zeros_like(params), zeros_like(params), 0};
  }
};

inline void adam_update(IcnnParams& params, const IcnnParams& grads,
                        AdamState& state, const AdamConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, state.step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, state.step);
  auto tp = tensor_views(params);
  auto tg = tensor_views(const_cast<IcnnParams&>(grads));
  auto tm = tensor_views(state.m);
  auto tv = tensor_views(state.v);
  for (std::size_t k = 0; k < tp.size(); ++k) {
    for (Eigen::Index i = 0; i < tp[k].size; ++i) {
      const double g = tg[k].data[i];
      double& m = tm[k].data[i];
      double& v = tv[k].data[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      tp[k].data[i] -=
          cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
    }
  }
  params = icnn_project(std::move(params));
}

inline void accumulate(IcnnParams& into, const IcnnParams& grads,
                       double scale = 1.0) {
  auto ti = tensor_views(into);
  auto tg = tensor_views(const_cast<IcnnParams&>(grads));
  for (std::size_t k = 0; k < ti.size(); ++k)
    for (Eigen::Index i = 0; i < ti[k].size; ++i)
      ti[k].data[i] += scale * tg[k].data[i];
}

}  // namespace cmf
