// Input-convex potential network with hand-rolled differentiation.
//
// Architecture (convex in x by construction):
//
//   z_1 = act(W_1 x + b_1)
//   z_l = act(V_l z_{l-1} + W_l x + b_l),        V_l >= 0,  l = 2..L
//   w(x) = v' z_L + u' x + b + s |x|^2 / 2 + sum_k (a_k' x + c_k)^2 / 2,
//          v >= 0, s >= 0
//
// with act either ELU or Softplus(beta); both are convex and nondecreasing,
// so nonnegative hidden/output weights make w convex. The quadratic terms are
// the rank-limited quadratic input connections; initialization sets s = 1 and
// tiny network weights, so w starts out as |x|^2 / 2.
//
// Differentiation is implemented twice, both batched over points:
//  * a scalar path (values, input gradients, parameter gradients of
//    sum_i c_i w(x_i)) used by the sample-based trainer and the samplers;
//  * a second-order jet path that propagates (value, gradient, Hessian) per
//    unit and supports reverse mode onto the parameters for any contraction
//    sum_i lam_v w + <lam_g, grad w> + <lam_H, Hess w>, which is what the
//    Monge-Ampere regression differentiates.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "cmf/rng.hpp"
#include "cmf/types.hpp"
#include "json.hpp"

namespace cmf {

enum class Activation { kElu, kSoftplus };

struct IcnnArch {
  Eigen::Index input_dim = 2;
  std::vector<Eigen::Index> hidden{128, 128, 128, 128, 128};
  Activation activation = Activation::kElu;
  double softplus_beta = 10.0;
  Eigen::Index quadratic_rank = 4;

  void validate() const {
    if (input_dim < 1 || hidden.empty())
      throw NumericError("IcnnArch: need input_dim >= 1 and hidden layers");
    if (activation == Activation::kSoftplus && !(softplus_beta > 0))
      throw NumericError("IcnnArch: softplus beta must be positive");
  }
};

struct IcnnParams {
  IcnnArch arch;
  std::vector<Matrix> w;  // w[l]: hidden[l] x input_dim input/skip weights
  std::vector<Matrix> v;  // v[l]: hidden[l] x hidden[l-1], v[0] unused; >= 0
  std::vector<Vector> b;  // biases per hidden layer
  Vector v_out;           // >= 0
  Vector u_lin;
  double b_out = 0.0;
  double quad_scale = 1.0;  // >= 0, multiplies |x|^2 / 2
  Matrix quad_dirs;         // quadratic_rank x input_dim
  Vector quad_off;

  Eigen::Index layers() const { return static_cast<Eigen::Index>(w.size()); }
};

// Uniform access to every trainable buffer (optimizer + projection plumbing).
struct TensorView {
  double* data;
  Eigen::Index size;
  bool nonneg;  // constrained to stay >= 0 for convexity
};

inline std::vector<TensorView> tensor_views(IcnnParams& p) {
  std::vector<TensorView> out;
  for (auto& m : p.w) out.push_back({m.data(), m.size(), false});
  for (std::size_t l = 1; l < p.v.size(); ++l)
    out.push_back({p.v[l].data(), p.v[l].size(), true});
  for (auto& m : p.b) out.push_back({m.data(), m.size(), false});
  out.push_back({p.v_out.data(), p.v_out.size(), true});
  out.push_back({p.u_lin.data(), p.u_lin.size(), false});
  out.push_back({&p.b_out, 1, false});
  out.push_back({&p.quad_scale, 1, true});
  out.push_back({p.quad_dirs.data(), p.quad_dirs.size(), false});
  out.push_back({p.quad_off.data(), p.quad_off.size(), false});
  return out;
}

inline IcnnParams zeros_like(const IcnnParams& p) {
  IcnnParams z = p;
  for (auto& m : z.w) m.setZero();
  for (auto& m : z.v) m.setZero();
  for (auto& m : z.b) m.setZero();
  z.v_out.setZero();
  z.u_lin.setZero();
  z.b_out = 0.0;
  z.quad_scale = 0.0;
  z.quad_dirs.setZero();
  z.quad_off.setZero();
  return z;
}

// Clamps the convexity-constrained weights at zero; idempotent.
inline IcnnParams icnn_project(IcnnParams p) {
  for (std::size_t l = 1; l < p.v.size(); ++l) p.v[l] = p.v[l].cwiseMax(0.0);
  p.v_out = p.v_out.cwiseMax(0.0);
  p.quad_scale = std::max(p.quad_scale, 0.0);
  return p;
}

// Initializes w_theta close to |x|^2 / 2: unit quadratic skip, small
// Glorot-scaled weights everywhere else. Bit-deterministic given the seed.
inline IcnnParams icnn_init(const IcnnArch& arch, std::uint64_t seed) {
  arch.validate();
  IcnnParams p;
  p.arch = arch;
  const Eigen::Index d = arch.input_dim;
  const Eigen::Index layers = static_cast<Eigen::Index>(arch.hidden.size());
  const RngKey key = RngKey::from_seed(seed).fold_in(kStreamInit);
  std::uint64_t tensor_idx = 0;
  auto glorot = [&](Eigen::Index rows, Eigen::Index cols, bool nonneg) {
    Matrix m(rows, cols);
    if (m.size() > 0) fill_normal(m, key.fold_in(tensor_idx));
    ++tensor_idx;
    m *= 1e-2 * std::sqrt(2.0 / static_cast<double>(rows + cols));
    if (nonneg) m = m.cwiseAbs();
    return m;
  };
  p.w.resize(layers);
  p.v.resize(layers);
  p.b.resize(layers);
  for (Eigen::Index l = 0; l < layers; ++l) {
    p.w[l] = glorot(arch.hidden[l], d, false);
    if (l > 0) p.v[l] = glorot(arch.hidden[l], arch.hidden[l - 1], true);
    p.b[l] = Vector::Zero(arch.hidden[l]);
  }
  p.v_out = glorot(arch.hidden.back(), 1, true).col(0);
  p.u_lin = Vector::Zero(d);
  p.b_out = 0.0;
  p.quad_scale = 1.0;
  const Eigen::Index k = std::max<Eigen::Index>(arch.quadratic_rank, 0);
  p.quad_dirs = glorot(k, d, false);
  p.quad_off = Vector::Zero(k);
  return p;
}

namespace act {

// Activation value and derivative arrays, elementwise over a matrix.
struct Derivs {
  Matrix a;
  Matrix d1, d2, d3;
};

inline Derivs eval(const IcnnArch& arch, const Matrix& z, int order) {
  Derivs out;
  const auto za = z.array();
  if (arch.activation == Activation::kElu) {
    // elu(z) = max(z,0) + exp(min(z,0)) - 1; elu'(z) = exp(min(z,0)).
    const Eigen::ArrayXXd ez = za.min(0.0).exp();
    out.a = (za.max(0.0) + ez - 1.0).matrix();
    if (order >= 1) out.d1 = ez.matrix();
    if (order >= 2) out.d2 = ((za < 0.0).cast<double>() * ez).matrix();
    if (order >= 3) out.d3 = out.d2;
  } else {
    const double beta = arch.softplus_beta;
    const Eigen::ArrayXXd bz = beta * za;
    const Eigen::ArrayXXd enb = (-bz.abs()).exp();
    out.a = ((bz.max(0.0) + (1.0 + enb).log()) / beta).matrix();
    const Eigen::ArrayXXd sig =
        (bz >= 0.0).select(1.0 / (1.0 + enb), enb / (1.0 + enb));
    if (order >= 1) out.d1 = sig.matrix();
    if (order >= 2) out.d2 = (beta * sig * (1.0 - sig)).matrix();
    if (order >= 3)
      out.d3 = (beta * beta * sig * (1.0 - sig) * (1.0 - 2.0 * sig)).matrix();
  }
  if (!out.a.allFinite()) throw NumericError("activation overflow");
  return out;
}

}  // namespace act

// ---------------------------------------------------------------------------
// Scalar path: batched values, input gradients, parameter backprop.
// ---------------------------------------------------------------------------

struct ForwardStash {
  Matrix x;                       // n x d input batch
  std::vector<act::Derivs> acts;  // per layer
  Matrix p;                       // n x K quadratic pre-activations a_k'x + c_k
  Vector value;
};

inline ForwardStash icnn_forward_batch(const IcnnParams& params,
                                       const Matrix& x, int order = 1) {
  const Eigen::Index layers = params.layers();
  ForwardStash s;
  s.x = x;
  s.acts.resize(static_cast<std::size_t>(layers));
  Matrix z = x * params.w[0].transpose();
  z.rowwise() += params.b[0].transpose();
  s.acts[0] = act::eval(params.arch, z, order);
  for (Eigen::Index l = 1; l < layers; ++l) {
    z.noalias() = s.acts[l - 1].a * params.v[l].transpose();
    z.noalias() += x * params.w[l].transpose();
    z.rowwise() += params.b[l].transpose();
    s.acts[l] = act::eval(params.arch, z, order);
  }
  s.p = x * params.quad_dirs.transpose();
  if (s.p.cols() > 0) s.p.rowwise() += params.quad_off.transpose();
  s.value = s.acts[layers - 1].a * params.v_out + x * params.u_lin;
  s.value.array() += params.b_out;
  s.value += 0.5 * params.quad_scale * x.rowwise().squaredNorm();
  if (s.p.cols() > 0) s.value += 0.5 * s.p.rowwise().squaredNorm();
  return s;
}

inline Vector icnn_value_batch(const IcnnParams& params, const Matrix& x) {
  return icnn_forward_batch(params, x, 0).value;
}

// Input gradients for the whole batch (reverse pass over the stash).
inline Matrix icnn_grad_batch(const IcnnParams& params,
                              const ForwardStash& s) {
  const Eigen::Index layers = params.layers();
  const Eigen::Index n = s.x.rows();
  Matrix grad = Matrix::Zero(n, params.arch.input_dim);
  Matrix t = (s.acts[layers - 1].d1.array().rowwise() *
              params.v_out.transpose().array())
                 .matrix();
  for (Eigen::Index l = layers - 1; l >= 1; --l) {
    grad.noalias() += t * params.w[l];
    t = ((t * params.v[l]).array() * s.acts[l - 1].d1.array()).matrix();
  }
  grad.noalias() += t * params.w[0];
  grad.rowwise() += params.u_lin.transpose();
  grad += params.quad_scale * s.x;
  if (s.p.cols() > 0) grad.noalias() += s.p * params.quad_dirs;
  return grad;
}

inline std::pair<Vector, Matrix> icnn_value_and_grad_batch(
    const IcnnParams& params, const Matrix& x) {
  const ForwardStash s = icnn_forward_batch(params, x, 1);
  return {s.value, icnn_grad_batch(params, s)};
}

// Parameter gradient of sum_i coeffs[i] * w(x_i); linear in coeffs.
inline IcnnParams icnn_backprop(const IcnnParams& params,
                                const ForwardStash& s, const Vector& coeffs) {
  if (coeffs.size() != s.x.rows())
    throw NumericError("icnn_backprop: coeffs/batch size mismatch");
  const Eigen::Index layers = params.layers();
  IcnnParams g = zeros_like(params);

  g.v_out = s.acts[layers - 1].a.transpose() * coeffs;
  g.u_lin = s.x.transpose() * coeffs;
  g.b_out = coeffs.sum();
  g.quad_scale = 0.5 * coeffs.dot(s.x.rowwise().squaredNorm());
  if (s.p.cols() > 0) {
    const Matrix pw = (s.p.array().colwise() * coeffs.array()).matrix();
    g.quad_dirs = pw.transpose() * s.x;
    g.quad_off = pw.colwise().sum().transpose();
  }

  Matrix delta = (s.acts[layers - 1].d1.array().colwise() * coeffs.array())
                     .matrix();
  delta = (delta.array().rowwise() * params.v_out.transpose().array()).matrix();
  for (Eigen::Index l = layers - 1; l >= 1; --l) {
    g.v[l].noalias() = delta.transpose() * s.acts[l - 1].a;
    g.w[l].noalias() = delta.transpose() * s.x;
    g.b[l] = delta.colwise().sum().transpose();
    delta = ((delta * params.v[l]).array() * s.acts[l - 1].d1.array()).matrix();
  }
  g.w[0].noalias() = delta.transpose() * s.x;
  g.b[0] = delta.colwise().sum().transpose();
  return g;
}

inline IcnnParams icnn_backprop(const IcnnParams& params, const Matrix& x,
                                const Vector& coeffs) {
  return icnn_backprop(params, icnn_forward_batch(params, x, 1), coeffs);
}

// ---------------------------------------------------------------------------
// Jet path: second-order forward (value, gradient, Hessian per point) and
// reverse mode onto the parameters.
// ---------------------------------------------------------------------------

// Plane layout: val is n x h; grad[r] and hess[r*d+s] are n x h matrices
// holding the r-th gradient and (r,s) Hessian component of every unit.
struct JetPlanes {
  Matrix val;
  std::vector<Matrix> grad;
  std::vector<Matrix> hess;
};

struct JetStash {
  Matrix x;
  Matrix p;                     // n x K
  std::vector<JetPlanes> z;     // pre-activation jets per layer
  std::vector<act::Derivs> dz;  // activation derivatives at z.val
  std::vector<JetPlanes> a;     // post-activation jets per layer
};

struct JetOutputs {
  Vector value;              // n
  Matrix grad;               // n x d
  std::vector<Vector> hess;  // hess[r*d+s] is the n-vector of H(r,s)
};

namespace detail {

inline JetPlanes jet_affine(const IcnnParams& params, Eigen::Index l,
                            const JetPlanes* prev, const Matrix& x) {
  const Eigen::Index d = params.arch.input_dim;
  const Eigen::Index n = x.rows();
  const Eigen::Index h = params.arch.hidden[l];
  JetPlanes z;
  z.val = x * params.w[l].transpose();
  z.val.rowwise() += params.b[l].transpose();
  z.grad.resize(static_cast<std::size_t>(d));
  z.hess.assign(static_cast<std::size_t>(d * d), Matrix::Zero(n, h));
  for (Eigen::Index r = 0; r < d; ++r)
    z.grad[r] = params.w[l].col(r).transpose().replicate(n, 1);
  if (prev) {
    z.val.noalias() += prev->val * params.v[l].transpose();
    for (Eigen::Index r = 0; r < d; ++r)
      z.grad[r].noalias() += prev->grad[r] * params.v[l].transpose();
    for (std::size_t rs = 0; rs < z.hess.size(); ++rs)
      z.hess[rs].noalias() += prev->hess[rs] * params.v[l].transpose();
  }
  return z;
}

// a = act(z) on jets: a' = act'(z) z', a'' = act''(z) z_r z_s + act'(z) z_rs.
inline JetPlanes jet_activation(const JetPlanes& z, const act::Derivs& dz,
                                Eigen::Index d) {
  JetPlanes a;
  a.val = dz.a;
  a.grad.resize(static_cast<std::size_t>(d));
  a.hess.resize(static_cast<std::size_t>(d * d));
  for (Eigen::Index r = 0; r < d; ++r)
    a.grad[r] = z.grad[r].cwiseProduct(dz.d1);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      const std::size_t rc = static_cast<std::size_t>(r * d + c);
      a.hess[rc] = z.grad[r].cwiseProduct(z.grad[c]).cwiseProduct(dz.d2) +
                   z.hess[rc].cwiseProduct(dz.d1);
    }
  return a;
}

}  // namespace detail

inline JetStash icnn_jet_forward(const IcnnParams& params, const Matrix& x) {
  const Eigen::Index layers = params.layers();
  JetStash s;
  s.x = x;
  s.z.resize(static_cast<std::size_t>(layers));
  s.dz.resize(static_cast<std::size_t>(layers));
  s.a.resize(static_cast<std::size_t>(layers));
  for (Eigen::Index l = 0; l < layers; ++l) {
    s.z[l] = detail::jet_affine(params, l, l > 0 ? &s.a[l - 1] : nullptr, x);
    s.dz[l] = act::eval(params.arch, s.z[l].val, 3);
    s.a[l] = detail::jet_activation(s.z[l], s.dz[l], params.arch.input_dim);
  }
  s.p = x * params.quad_dirs.transpose();
  if (s.p.cols() > 0) s.p.rowwise() += params.quad_off.transpose();
  return s;
}

inline JetOutputs icnn_jet_outputs(const IcnnParams& params,
                                   const JetStash& s) {
  const Eigen::Index d = params.arch.input_dim;
  const Eigen::Index n = s.x.rows();
  const JetPlanes& top = s.a.back();
  JetOutputs out;
  out.value = top.val * params.v_out + s.x * params.u_lin;
  out.value.array() += params.b_out;
  out.value += 0.5 * params.quad_scale * s.x.rowwise().squaredNorm();
  if (s.p.cols() > 0) out.value += 0.5 * s.p.rowwise().squaredNorm();

  out.grad.resize(n, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    out.grad.col(r) = top.grad[r] * params.v_out;
    out.grad.col(r).array() += params.u_lin(r);
    out.grad.col(r) += params.quad_scale * s.x.col(r);
    if (s.p.cols() > 0)
      out.grad.col(r).noalias() += s.p * params.quad_dirs.col(r);
  }

  const Matrix quad_const = params.quad_dirs.transpose() * params.quad_dirs;
  out.hess.assign(static_cast<std::size_t>(d * d), Vector::Zero(n));
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      const std::size_t rc = static_cast<std::size_t>(r * d + c);
      out.hess[rc] = top.hess[rc] * params.v_out;
      out.hess[rc].array() +=
          (params.quad_dirs.rows() > 0 ? quad_const(r, c) : 0.0) +
          (r == c ? params.quad_scale : 0.0);
    }
  return out;
}

// Reverse pass of the jet computation: parameter gradient of
//   sum_i [ lam_val(i) w(x_i) + <lam_grad(i,:), grad w(x_i)>
//           + sum_{r,c} lam_hess[r*d+c](i) Hess w(x_i)(r,c) ].
inline IcnnParams icnn_jet_backprop(const IcnnParams& params,
                                    const JetStash& s, const Vector& lam_val,
                                    const Matrix& lam_grad,
                                    const std::vector<Vector>& lam_hess) {
  const Eigen::Index d = params.arch.input_dim;
  const Eigen::Index layers = params.layers();
  IcnnParams g = zeros_like(params);

  // Output layer.
  const JetPlanes& top = s.a.back();
  g.v_out = top.val.transpose() * lam_val;
  for (Eigen::Index r = 0; r < d; ++r)
    g.v_out.noalias() += top.grad[r].transpose() * lam_grad.col(r);
  for (std::size_t rs = 0; rs < lam_hess.size(); ++rs)
    g.v_out.noalias() += top.hess[rs].transpose() * lam_hess[rs];

  g.u_lin = s.x.transpose() * lam_val;
  for (Eigen::Index r = 0; r < d; ++r) g.u_lin(r) += lam_grad.col(r).sum();
  g.b_out = lam_val.sum();

  g.quad_scale = 0.5 * lam_val.dot(s.x.rowwise().squaredNorm());
  for (Eigen::Index r = 0; r < d; ++r)
    g.quad_scale += lam_grad.col(r).dot(s.x.col(r));
  for (Eigen::Index r = 0; r < d; ++r)
    g.quad_scale += lam_hess[static_cast<std::size_t>(r * d + r)].sum();

  if (params.quad_dirs.rows() > 0) {
    // Value term (1/2) p_k^2, gradient term p_k a_k, Hessian term a_k a_k'.
    const Matrix lam_p = (s.p.array().colwise() * lam_val.array()).matrix();
    g.quad_dirs = lam_p.transpose() * s.x;
    g.quad_off = lam_p.colwise().sum().transpose();
    const Matrix lg_a = lam_grad * params.quad_dirs.transpose();  // (lam_g . a_k)
    g.quad_dirs.noalias() += lg_a.transpose() * s.x;
    g.quad_dirs.noalias() += s.p.transpose() * lam_grad;
    g.quad_off += lg_a.colwise().sum().transpose();
    Matrix hess_sum(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c)
        hess_sum(r, c) = lam_hess[static_cast<std::size_t>(r * d + c)].sum();
    g.quad_dirs.noalias() +=
        params.quad_dirs * (hess_sum + hess_sum.transpose());
  }

  // Adjoint planes flowing into the top activation output.
  JetPlanes bar;
  bar.val = lam_val * params.v_out.transpose();
  bar.grad.resize(static_cast<std::size_t>(d));
  bar.hess.resize(static_cast<std::size_t>(d * d));
  for (Eigen::Index r = 0; r < d; ++r)
    bar.grad[r] = lam_grad.col(r) * params.v_out.transpose();
  for (std::size_t rs = 0; rs < bar.hess.size(); ++rs)
    bar.hess[rs] = lam_hess[rs] * params.v_out.transpose();

  for (Eigen::Index l = layers - 1; l >= 0; --l) {
    const JetPlanes& z = s.z[l];
    const act::Derivs& dz = s.dz[l];

    // Activation reverse.
    JetPlanes zbar;
    zbar.val = bar.val.cwiseProduct(dz.d1);
    for (Eigen::Index r = 0; r < d; ++r)
      zbar.val += bar.grad[r].cwiseProduct(z.grad[r]).cwiseProduct(dz.d2);
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) {
        const std::size_t rc = static_cast<std::size_t>(r * d + c);
        zbar.val += bar.hess[rc]
                        .cwiseProduct(z.grad[r])
                        .cwiseProduct(z.grad[c])
                        .cwiseProduct(dz.d3);
        zbar.val += bar.hess[rc].cwiseProduct(z.hess[rc]).cwiseProduct(dz.d2);
      }
    zbar.grad.resize(static_cast<std::size_t>(d));
    for (Eigen::Index r = 0; r < d; ++r) {
      zbar.grad[r] = bar.grad[r].cwiseProduct(dz.d1);
      for (Eigen::Index c = 0; c < d; ++c) {
        zbar.grad[r] += (bar.hess[static_cast<std::size_t>(r * d + c)] +
                         bar.hess[static_cast<std::size_t>(c * d + r)])
                            .cwiseProduct(z.grad[c])
                            .cwiseProduct(dz.d2);
      }
    }
    zbar.hess.resize(static_cast<std::size_t>(d * d));
    for (std::size_t rs = 0; rs < zbar.hess.size(); ++rs)
      zbar.hess[rs] = bar.hess[rs].cwiseProduct(dz.d1);

    // Affine reverse: z = A_prev V' + x W' + b on all planes.
    g.w[l].noalias() += zbar.val.transpose() * s.x;
    for (Eigen::Index r = 0; r < d; ++r)
      g.w[l].col(r) += zbar.grad[r].colwise().sum().transpose();
    g.b[l] = zbar.val.colwise().sum().transpose();
    if (l > 0) {
      const JetPlanes& prev = s.a[l - 1];
      g.v[l].noalias() = zbar.val.transpose() * prev.val;
      for (Eigen::Index r = 0; r < d; ++r)
        g.v[l].noalias() += zbar.grad[r].transpose() * prev.grad[r];
      for (std::size_t rs = 0; rs < zbar.hess.size(); ++rs)
        g.v[l].noalias() += zbar.hess[rs].transpose() * prev.hess[rs];

      JetPlanes next;
      next.val = zbar.val * params.v[l];
      next.grad.resize(static_cast<std::size_t>(d));
      next.hess.resize(static_cast<std::size_t>(d * d));
      for (Eigen::Index r = 0; r < d; ++r)
        next.grad[r] = zbar.grad[r] * params.v[l];
      for (std::size_t rs = 0; rs < zbar.hess.size(); ++rs)
        next.hess[rs] = zbar.hess[rs] * params.v[l];
      bar = std::move(next);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Single-point convenience API.
// ---------------------------------------------------------------------------

struct EvalBundle {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;  // empty unless order 2 was requested
};

inline EvalBundle icnn_eval(const IcnnParams& params, const Vector& x,
                            int order = 1) {
  if (!x.allFinite()) throw NumericError("icnn_eval: non-finite input");
  const Eigen::Index d = params.arch.input_dim;
  if (x.size() != d) throw NumericError("icnn_eval: dimension mismatch");
  const Matrix xb = x.transpose();
  EvalBundle out;
  if (order <= 1) {
    const ForwardStash s = icnn_forward_batch(params, xb, order);
    out.value = s.value(0);
    if (order >= 1)
      out.gradient = icnn_grad_batch(params, s).row(0).transpose();
    return out;
  }
  const JetOutputs jo = icnn_jet_outputs(params, icnn_jet_forward(params, xb));
  out.value = jo.value(0);
  out.gradient = jo.grad.row(0).transpose();
  out.hessian.resize(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c)
      out.hessian(r, c) = jo.hess[static_cast<std::size_t>(r * d + c)](0);
  out.hessian = (0.5 * (out.hessian + out.hessian.transpose())).eval();
  return out;
}

// Batched Hessians: returns one d x d matrix per input row.
inline std::vector<Matrix> icnn_hessian_batch(const IcnnParams& params,
                                              const Matrix& x) {
  const Eigen::Index d = params.arch.input_dim;
  const JetOutputs jo = icnn_jet_outputs(params, icnn_jet_forward(params, x));
  std::vector<Matrix> out(static_cast<std::size_t>(x.rows()), Matrix(d, d));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c)
        out[static_cast<std::size_t>(i)](r, c) =
            jo.hess[static_cast<std::size_t>(r * d + c)](i);
  return out;
}

// ---------------------------------------------------------------------------
// JSON model format (versioned).
// ---------------------------------------------------------------------------

inline nlohmann::json icnn_to_json(const IcnnParams& p) {
  auto flat = [](const Matrix& m) {
    return std::vector<double>(m.data(), m.data() + m.size());
  };
  auto flatv = [](const Vector& m) {
    return std::vector<double>(m.data(), m.data() + m.size());
  };
  nlohmann::json j;
  j["format"] = "cmf-icnn/1";
  j["arch"] = {
      {"input_dim", p.arch.input_dim},
      {"hidden", p.arch.hidden},
      {"activation",
       p.arch.activation == Activation::kElu ? "elu" : "softplus"},
      {"softplus_beta", p.arch.softplus_beta},
      {"quadratic_rank", p.arch.quadratic_rank}};
  nlohmann::json params;
  for (Eigen::Index l = 0; l < p.layers(); ++l) {
    params["W" + std::to_string(l)] = flat(p.w[l]);
    params["b" + std::to_string(l)] = flatv(p.b[l]);
    if (l > 0) params["V" + std::to_string(l)] = flat(p.v[l]);
  }
  params["v_out"] = flatv(p.v_out);
  params["u_lin"] = flatv(p.u_lin);
  params["b_out"] = p.b_out;
  params["quad_scale"] = p.quad_scale;
  params["quad_dirs"] = flat(p.quad_dirs);
  params["quad_off"] = flatv(p.quad_off);
  j["params"] = params;
  return j;
}

inline IcnnParams icnn_from_json(const nlohmann::json& j) {
  if (j.at("format") != "cmf-icnn/1")
    throw NumericError("unsupported model format");
  IcnnArch arch;
  arch.input_dim = j.at("arch").at("input_dim").get<Eigen::Index>();
  arch.hidden = j.at("arch").at("hidden").get<std::vector<Eigen::Index>>();
  arch.activation = j.at("arch").at("activation") == "elu"
                        ? Activation::kElu
                        : Activation::kSoftplus;
  arch.softplus_beta = j.at("arch").at("softplus_beta").get<double>();
  arch.quadratic_rank = j.at("arch").at("quadratic_rank").get<Eigen::Index>();
  IcnnParams p = icnn_init(arch, 0);
  const auto& params = j.at("params");
  auto load = [&](const std::string& name, double* dst, Eigen::Index size) {
    const auto v = params.at(name).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != size)
      throw NumericError("model field size mismatch: " + name);
    std::copy(v.begin(), v.end(), dst);
  };
  for (Eigen::Index l = 0; l < p.layers(); ++l) {
    load("W" + std::to_string(l), p.w[l].data(), p.w[l].size());
    load("b" + std::to_string(l), p.b[l].data(), p.b[l].size());
    if (l > 0) load("V" + std::to_string(l), p.v[l].data(), p.v[l].size());
  }
  load("v_out", p.v_out.data(), p.v_out.size());
  load("u_lin", p.u_lin.data(), p.u_lin.size());
  p.b_out = params.at("b_out").get<double>();
  p.quad_scale = params.at("quad_scale").get<double>();
  load("quad_dirs", p.quad_dirs.data(), p.quad_dirs.size());
  load("quad_off", p.quad_off.data(), p.quad_off.size());
  return p;
}

inline void icnn_save(const IcnnParams& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw NumericError("cannot open " + path);
  os << icnn_to_json(p).dump(2) << '\n';
}

inline IcnnParams icnn_load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw NumericError("cannot open " + path);
  nlohmann::json j;
  is >> j;
  return icnn_from_json(j);
}

// Builds parameters that realize an exact quadratic
//   w(x) = (x - r)' Q (x - r) / 2  with Q symmetric positive semidefinite,
// using only the quadratic input connections (hidden stack contributes 0).
// Used to embed closed-form Gaussian potentials in the network format.
inline IcnnParams icnn_exact_quadratic(const Matrix& q, const Vector& r) {
  const Eigen::Index d = q.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(q);
  if (eig.eigenvalues().minCoeff() < -1e-12)
    throw NumericError("icnn_exact_quadratic: Q not PSD");
  IcnnArch arch;
  arch.input_dim = d;
  arch.hidden = {1};
  arch.activation = Activation::kSoftplus;
  arch.quadratic_rank = d;
  IcnnParams p = icnn_init(arch, 0);
  p.w[0].setZero();
  p.b[0].setZero();
  p.v_out.setZero();
  p.u_lin.setZero();
  p.quad_scale = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double lam = std::max(eig.eigenvalues()(k), 0.0);
    p.quad_dirs.row(k) =
        std::sqrt(lam) * eig.eigenvectors().col(k).transpose();
    p.quad_off(k) = -p.quad_dirs.row(k).dot(r);
  }
  p.b_out = 0.0;
  return p;
}

}  // namespace cmf
