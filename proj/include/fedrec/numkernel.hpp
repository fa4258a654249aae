#pragma once

// Dense numeric kernel: two-layer MLP forward/backward, Xavier init and Adam.
// Everything is templated on the scalar type; the simulator instantiates
// double throughout.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fedrec/errors.hpp"
#include "fedrec/random.hpp"

namespace fedrec {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform Xavier/Glorot draw in [-a, a], a = sqrt(6 / (rows + cols)).
/// Entries are drawn in column-major order.
template <typename Scalar>
MatrixX<Scalar> xavier_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  if (rows < 1 || cols < 1) throw DimensionError("xavier_init: empty shape");
  const Scalar bound = std::sqrt(Scalar(6) / Scalar(rows + cols));
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  MatrixX<Scalar> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

/// y = W2 * relu(W1 * x + b1) + b2
template <typename Scalar>
struct MlpParams {
  MatrixX<Scalar> W1;
  VectorX<Scalar> b1;
  MatrixX<Scalar> W2;
  VectorX<Scalar> b2;

  MlpParams() = default;
  MlpParams(Eigen::Index in, Eigen::Index hidden, Eigen::Index out)
      : W1(MatrixX<Scalar>::Zero(hidden, in)),
        b1(VectorX<Scalar>::Zero(hidden)),
        W2(MatrixX<Scalar>::Zero(out, hidden)),
        b2(VectorX<Scalar>::Zero(out)) {}

  /// Xavier weights, zero biases.
  static MlpParams xavier(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng) {
    MlpParams p(in, hidden, out);
    p.W1 = xavier_init<Scalar>(hidden, in, rng);
    p.W2 = xavier_init<Scalar>(out, hidden, rng);
    return p;
  }

  Eigen::Index input_size() const { return W1.cols(); }
  Eigen::Index hidden_size() const { return W1.rows(); }
  Eigen::Index output_size() const { return W2.rows(); }
  Eigen::Index parameter_count() const { return W1.size() + b1.size() + W2.size() + b2.size(); }

  MlpParams zeros_like() const { return MlpParams(input_size(), hidden_size(), output_size()); }

  bool same_shape(const MlpParams& o) const {
    return W1.rows() == o.W1.rows() && W1.cols() == o.W1.cols() && b1.size() == o.b1.size() &&
           W2.rows() == o.W2.rows() && W2.cols() == o.W2.cols() && b2.size() == o.b2.size();
  }

  bool all_finite() const {
    return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite();
  }

  void set_zero() {
    W1.setZero();
    b1.setZero();
    W2.setZero();
    b2.setZero();
  }

  /// this += alpha * other
  void axpy(Scalar alpha, const MlpParams& other) {
    if (!same_shape(other)) throw DimensionError("MlpParams::axpy: shape mismatch");
    W1 += alpha * other.W1;
    b1 += alpha * other.b1;
    W2 += alpha * other.W2;
    b2 += alpha * other.b2;
  }

  MlpParams& operator+=(const MlpParams& other) {
    axpy(Scalar(1), other);
    return *this;
  }
  MlpParams& operator*=(Scalar s) {
    W1 *= s;
    b1 *= s;
    W2 *= s;
    b2 *= s;
    return *this;
  }
  friend MlpParams operator-(const MlpParams& a, const MlpParams& b) {
    MlpParams r = a;
    r.axpy(Scalar(-1), b);
    return r;
  }
  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    return a.same_shape(b) && a.W1 == b.W1 && a.b1 == b.b1 && a.W2 == b.W2 && a.b2 == b.b2;
  }

  /// Visits (name, data pointer, size) for each tensor in a fixed order.
  template <typename F>
  void for_each_tensor(F&& f) {
    f("W1", W1.data(), W1.size());
    f("b1", b1.data(), b1.size());
    f("W2", W2.data(), W2.size());
    f("b2", b2.data(), b2.size());
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("W1", W1.data(), W1.size());
    f("b1", b1.data(), b1.size());
    f("W2", W2.data(), W2.size());
    f("b2", b2.data(), b2.size());
  }
};

/// Activations retained by the forward pass; columns are samples.
template <typename Scalar>
struct MlpCache {
  MatrixX<Scalar> X;
  MatrixX<Scalar> Z1;
  MatrixX<Scalar> H;
};

template <typename Scalar>
struct MlpForward {
  MatrixX<Scalar> Y;
  MlpCache<Scalar> cache;
};

template <typename Scalar>
struct MlpBackward {
  MlpParams<Scalar> grads;
  MatrixX<Scalar> dX;
};

/// Batched forward pass: each column of X is one input.
template <typename Scalar, typename Derived>
MlpForward<Scalar> mlp_forward(const MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& X) {
  if (X.rows() != p.input_size())
    throw DimensionError("mlp_forward: input width " + std::to_string(X.rows()) + " != " +
                         std::to_string(p.input_size()));
  MlpForward<Scalar> out;
  out.cache.X = X;
  out.cache.Z1 = (p.W1 * out.cache.X).colwise() + p.b1;
  out.cache.H = out.cache.Z1.cwiseMax(Scalar(0));
  out.Y = (p.W2 * out.cache.H).colwise() + p.b2;
  return out;
}

/// Output only; skips storing the cache.
template <typename Scalar, typename Derived>
MatrixX<Scalar> mlp_predict(const MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& X) {
  if (X.rows() != p.input_size()) throw DimensionError("mlp_predict: input width mismatch");
  MatrixX<Scalar> H = ((p.W1 * X).colwise() + p.b1).cwiseMax(Scalar(0));
  return (p.W2 * H).colwise() + p.b2;
}

/// Gradients of sum_n dY(:,n) . Y(:,n) with respect to the parameters and inputs.
/// The ReLU subgradient at zero is zero.
template <typename Scalar, typename Derived>
MlpBackward<Scalar> mlp_backward(const MlpParams<Scalar>& p, const MlpCache<Scalar>& cache,
                                 const Eigen::MatrixBase<Derived>& dY) {
  if (dY.rows() != p.output_size() || dY.cols() != cache.H.cols() ||
      cache.X.rows() != p.input_size() || cache.H.rows() != p.hidden_size())
    throw DimensionError("mlp_backward: cache/gradient shape mismatch");
  MlpBackward<Scalar> out;
  out.grads.W2 = dY * cache.H.transpose();
  out.grads.b2 = dY.rowwise().sum();
  MatrixX<Scalar> dZ1 = (p.W2.transpose() * dY).cwiseProduct(
      (cache.Z1.array() > Scalar(0)).template cast<Scalar>().matrix());
  out.grads.W1 = dZ1 * cache.X.transpose();
  out.grads.b1 = dZ1.rowwise().sum();
  out.dX = p.W1.transpose() * dZ1;
  return out;
}

/// One tensor handed to the optimizer.
template <typename Scalar>
struct ParamSlot {
  std::string name;
  Scalar* value;
  const Scalar* grad;
  Eigen::Index size;
};

template <typename Scalar>
void append_slots(MlpParams<Scalar>& params, const MlpParams<Scalar>& grads,
                  const std::string& prefix, std::vector<ParamSlot<Scalar>>& out) {
  if (!params.same_shape(grads)) throw DimensionError("append_slots: " + prefix + " shape mismatch");
  out.push_back({prefix + ".W1", params.W1.data(), grads.W1.data(), params.W1.size()});
  out.push_back({prefix + ".b1", params.b1.data(), grads.b1.data(), params.b1.size()});
  out.push_back({prefix + ".W2", params.W2.data(), grads.W2.data(), params.W2.size()});
  out.push_back({prefix + ".b2", params.b2.data(), grads.b2.data(), params.b2.size()});
}

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AdamHyper hyper;
  std::vector<VectorX<Scalar>> m;
  std::vector<VectorX<Scalar>> v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(AdamHyper h) : hyper(h) {}
};

/// Bias-corrected Adam update over a parameter set. Moments are sized on the
/// first call; later calls must pass the same slots in the same order.
template <typename Scalar>
void adam_step(const std::vector<ParamSlot<Scalar>>& slots, AdamState<Scalar>& state) {
  for (const auto& s : slots) {
    Eigen::Map<const VectorX<Scalar>> g(s.grad, s.size);
    if (!g.allFinite()) throw NumericError("adam_step: non-finite gradient in " + s.name);
  }
  if (state.m.empty()) {
    for (const auto& s : slots) {
      state.m.push_back(VectorX<Scalar>::Zero(s.size));
      state.v.push_back(VectorX<Scalar>::Zero(s.size));
    }
  }
  if (state.m.size() != slots.size()) throw DimensionError("adam_step: slot count changed");
  ++state.step;
  const Scalar b1 = Scalar(state.hyper.beta1);
  const Scalar b2 = Scalar(state.hyper.beta2);
  const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(state.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(state.step));
  const Scalar lr = Scalar(state.hyper.lr);
  const Scalar eps = Scalar(state.hyper.eps);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    if (state.m[i].size() != s.size) throw DimensionError("adam_step: size changed for " + s.name);
    Eigen::Map<VectorX<Scalar>> w(s.value, s.size);
    Eigen::Map<const VectorX<Scalar>> g(s.grad, s.size);
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g.cwiseAbs2();
    w.array() -= lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + eps);
  }
}

}  // namespace fedrec
