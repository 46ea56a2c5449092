#pragma once

// Dense feed-forward regressor with hand-written reverse mode. Parameters
// live in one flat vector so optimizers can treat the network as a point in
// R^p; layer l occupies [W_l (out x in, column-major), b_l].

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "cadam/rng.hpp"
#include "cadam/types.hpp"

namespace cadam::meta {

enum class Activation { kRelu, kTanh };

struct MlpArchitecture {
  std::vector<Index> sizes{1, 40, 40, 1};
  Activation hidden = Activation::kRelu;  // output layer is always linear

  std::size_t layers() const { return sizes.size() - 1; }

  Index parameter_count() const {
    Index n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l + 1] * sizes[l] + sizes[l + 1];
    return n;
  }

  void validate() const {
    if (sizes.size() < 2) throw InvalidConfig("an MLP needs at least an input and an output layer");
    for (Index s : sizes)
      if (s < 1) throw InvalidConfig("layer sizes must be positive");
  }
};

struct MlpLayers {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

inline MlpLayers unflatten(const MlpArchitecture& arch, const Vector& params) {
  expect_dim(params.size(), arch.parameter_count(), "unflatten");
  MlpLayers out;
  Index off = 0;
  for (std::size_t l = 0; l < arch.layers(); ++l) {
    const Index in = arch.sizes[l], o = arch.sizes[l + 1];
    out.weights.emplace_back(Eigen::Map<const Matrix>(params.data() + off, o, in));
    off += o * in;
    out.biases.emplace_back(params.segment(off, o));
    off += o;
  }
  return out;
}

inline Vector flatten(const MlpArchitecture& arch, const MlpLayers& layers) {
  Vector params(arch.parameter_count());
  Index off = 0;
  for (std::size_t l = 0; l < arch.layers(); ++l) {
    const Index in = arch.sizes[l], o = arch.sizes[l + 1];
    expect_dim(layers.weights[l].rows(), o, "flatten weights");
    expect_dim(layers.weights[l].cols(), in, "flatten weights");
    expect_dim(layers.biases[l].size(), o, "flatten biases");
    Eigen::Map<Matrix>(params.data() + off, o, in) = layers.weights[l];
    off += o * in;
    params.segment(off, o) = layers.biases[l];
    off += o;
  }
  return params;
}

/// Network = architecture + current parameters.
struct Mlp {
  MlpArchitecture arch;
  Vector params;

  /// Weights and biases uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Mlp init(MlpArchitecture arch, Stream& stream) {
    arch.validate();
    Mlp net{arch, Vector(arch.parameter_count())};
    Index off = 0;
    for (std::size_t l = 0; l < arch.layers(); ++l) {
      const Index in = arch.sizes[l], o = arch.sizes[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      for (Index k = 0; k < o * in + o; ++k) net.params[off + k] = stream.uniform(-bound, bound);
      off += o * in + o;
    }
    return net;
  }

  static Mlp zeros(MlpArchitecture arch) {
    arch.validate();
    const Index n = arch.parameter_count();
    return {std::move(arch), Vector::Zero(n)};
  }
};

namespace detail {

inline void activate(Matrix& z, Activation act) {
  if (act == Activation::kRelu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

}  // namespace detail

/// Forward pass on a batch of column inputs (in x M); returns out x M.
inline Matrix mlp_forward(const MlpArchitecture& arch, const Vector& params, const Matrix& inputs) {
  expect_dim(params.size(), arch.parameter_count(), "mlp_forward params");
  expect_dim(inputs.rows(), arch.sizes.front(), "mlp_forward inputs");
  Matrix a = inputs;
  Index off = 0;
  for (std::size_t l = 0; l < arch.layers(); ++l) {
    const Index in = arch.sizes[l], o = arch.sizes[l + 1];
    Eigen::Map<const Matrix> W(params.data() + off, o, in);
    off += o * in;
    Eigen::Map<const Vector> b(params.data() + off, o);
    off += o;
    Matrix z = W * a;
    z.colwise() += b;
    if (l + 1 < arch.layers()) detail::activate(z, arch.hidden);
    a = std::move(z);
  }
  return a;
}

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

/// Sum over the batch of ||NN(input) - target||^2 and its gradient.
inline LossGrad mlp_loss_grad(const MlpArchitecture& arch, const Vector& params, const Matrix& inputs,
                              const Matrix& targets) {
  expect_dim(params.size(), arch.parameter_count(), "mlp_loss_grad params");
  expect_dim(inputs.rows(), arch.sizes.front(), "mlp_loss_grad inputs");
  expect_dim(targets.rows(), arch.sizes.back(), "mlp_loss_grad targets");
  expect_dim(targets.cols(), inputs.cols(), "mlp_loss_grad batch");

  const std::size_t L = arch.layers();
  std::vector<Matrix> acts;  // acts[l] is the input of layer l
  acts.reserve(L + 1);
  acts.push_back(inputs);
  std::vector<Index> offsets(L);
  Index off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const Index in = arch.sizes[l], o = arch.sizes[l + 1];
    offsets[l] = off;
    Eigen::Map<const Matrix> W(params.data() + off, o, in);
    Eigen::Map<const Vector> b(params.data() + off + o * in, o);
    off += o * in + o;
    Matrix z = W * acts.back();
    z.colwise() += b;
    if (l + 1 < L) detail::activate(z, arch.hidden);
    acts.push_back(std::move(z));
  }

  LossGrad out;
  Matrix delta = acts.back() - targets;
  out.loss = delta.squaredNorm();
  delta *= 2.0;
  out.grad.resize(params.size());
  for (std::size_t l = L; l-- > 0;) {
    const Index in = arch.sizes[l], o = arch.sizes[l + 1];
    // delta holds dLoss/dZ_l at this point.
    Eigen::Map<Matrix>(out.grad.data() + offsets[l], o, in).noalias() = delta * acts[l].transpose();
    out.grad.segment(offsets[l] + o * in, o) = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const Matrix> W(params.data() + offsets[l], o, in);
    Matrix back = W.transpose() * delta;
    const Matrix& h = acts[l];  // post-activation of layer l-1
    if (arch.hidden == Activation::kRelu) {
      back = (h.array() > 0.0).select(back, 0.0);
    } else {
      back.array() *= 1.0 - h.array().square();
    }
    delta = std::move(back);
  }
  return out;
}

/// Hessian-vector product by central differences of a gradient:
/// (grad(x + h u) - grad(x - h u)) / 2h, h = sqrt(eps) (1 + ||x||) / ||u||.
inline Vector hvp_central_difference(const std::function<Vector(const Vector&)>& grad, const Vector& x,
                                     const Vector& u) {
  expect_dim(u.size(), x.size(), "hvp direction");
  const double unorm = u.norm();
  if (unorm == 0.0) return Vector::Zero(x.size());
  const double h = std::sqrt(std::numeric_limits<double>::epsilon()) * (1.0 + x.norm()) /
                   std::max(unorm, std::numeric_limits<double>::min());
  return (grad(x + h * u) - grad(x - h * u)) / (2.0 * h);
}

inline Vector mlp_hvp(const MlpArchitecture& arch, const Vector& params, const Matrix& inputs,
                      const Matrix& targets, const Vector& u) {
  return hvp_central_difference(
      [&](const Vector& w) { return mlp_loss_grad(arch, w, inputs, targets).grad; }, params, u);
}

}  // namespace cadam::meta
