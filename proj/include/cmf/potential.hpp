// Potential adapters: anything exposing batched value/gradient/Hessian over
// an n x d batch works as a potential for the conjugate solver and the
// Langevin sampler. Quadratics serve as closed-form oracles, IcnnPotential
// wraps a network.
#pragma once

#include <utility>
#include <vector>

#include "cmf/icnn.hpp"
#include "cmf/types.hpp"

namespace cmf {

// w(x) = x' A x / 2 + b' x + c with A symmetric.
struct QuadraticPotential {
  Matrix a;
  Vector b;
  double c = 0.0;

  Eigen::Index dim() const { return a.rows(); }

  Vector value_batch(const Matrix& x) const {
    Vector out = 0.5 * ((x * a).cwiseProduct(x)).rowwise().sum();
    out += x * b;
    out.array() += c;
    return out;
  }
  Matrix grad_batch(const Matrix& x) const {
    return (x * a).rowwise() + b.transpose();
  }
  std::pair<Vector, Matrix> value_and_grad_batch(const Matrix& x) const {
    return {value_batch(x), grad_batch(x)};
  }
  std::vector<Matrix> hessian_batch(const Matrix& x) const {
    return std::vector<Matrix>(static_cast<std::size_t>(x.rows()), a);
  }
};

struct IcnnPotential {
  const IcnnParams* params;

  explicit IcnnPotential(const IcnnParams& p) : params(&p) {}

  Eigen::Index dim() const { return params->arch.input_dim; }

  Vector value_batch(const Matrix& x) const {
    return icnn_value_batch(*params, x);
  }
  Matrix grad_batch(const Matrix& x) const {
    return icnn_grad_batch(*params, icnn_forward_batch(*params, x, 1));
  }
  std::pair<Vector, Matrix> value_and_grad_batch(const Matrix& x) const {
    return icnn_value_and_grad_batch(*params, x);
  }
  std::vector<Matrix> hessian_batch(const Matrix& x) const {
    return icnn_hessian_batch(*params, x);
  }
};

}  // namespace cmf
