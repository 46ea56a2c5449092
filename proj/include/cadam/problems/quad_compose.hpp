#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "cadam/problem.hpp"

namespace cadam {

/// f(y) = 1/2 ||y||^2 composed with g(x) = A x + b. Every oracle adds
/// zero-mean noise whose expected squared norm equals the configured sigma^2,
/// so the variance constants are known exactly. Value and gradient noise is
/// Gaussian; Jacobian noise is the rank-one product s xi eta^T of two Gaussian
/// vectors, which costs p + q draws instead of p q.
struct QuadCompose {
  Matrix A;  // q x p
  Vector b;  // q
  double sigma_g = 0.0;  // noise on inner values
  double sigma_J = 0.0;  // noise on inner Jacobians (Frobenius)
  double sigma_f = 0.0;  // noise on outer gradients
};

class QuadComposeProblem final : public CompositionalProblem {
 public:
  explicit QuadComposeProblem(QuadCompose qc) : qc_(std::move(qc)) {
    if (qc_.A.rows() != qc_.b.size()) throw DimensionMismatch("QuadCompose: A has q rows, b must have q entries");
    if (qc_.A.size() == 0) throw DimensionMismatch("QuadCompose: empty A");
    if (!qc_.A.allFinite() || !qc_.b.allFinite()) throw InvalidConfig("QuadCompose: non-finite data");
    if (qc_.sigma_g < 0 || qc_.sigma_J < 0 || qc_.sigma_f < 0) throw InvalidConfig("QuadCompose: negative noise");
  }

  const QuadCompose& spec() const { return qc_; }

  Index p() const override { return qc_.A.cols(); }
  Index q() const override { return qc_.A.rows(); }

  InnerSample draw_inner(const Vector& z, Stream& stream) const override {
    Vector value = draw_inner_value(z, stream);
    return {std::move(value), draw_jacobian_noise(stream)};
  }

  Vector draw_inner_value(const Vector& z, Stream& stream) const override {
    expect_dim(z.size(), p(), "quad inner");
    Vector value = qc_.A * z + qc_.b;
    if (qc_.sigma_g > 0) value += stream.normal_vector(q(), qc_.sigma_g / std::sqrt(static_cast<double>(q())));
    return value;
  }

  Jacobian draw_inner_jacobian(const Vector& z, Stream& stream) const override {
    expect_dim(z.size(), p(), "quad inner");
    Vector discard = draw_inner_value(z, stream);  // keep the stream in step with draw_inner
    (void)discard;
    return draw_jacobian_noise(stream);
  }

  Vector draw_outer(const Vector& y, Stream& stream) const override {
    expect_dim(y.size(), q(), "quad outer");
    Vector grad = y;
    if (qc_.sigma_f > 0) grad += stream.normal_vector(q(), qc_.sigma_f / std::sqrt(static_cast<double>(q())));
    return grad;
  }

  std::optional<Vector> exact_inner(const Vector& x) const override {
    expect_dim(x.size(), p(), "quad exact_inner");
    return Vector(qc_.A * x + qc_.b);
  }

  std::optional<double> exact_objective(const Vector& x) const override {
    expect_dim(x.size(), p(), "quad exact_objective");
    return 0.5 * (qc_.A * x + qc_.b).squaredNorm();
  }

  std::optional<Vector> exact_gradient(const Vector& x) const override {
    expect_dim(x.size(), p(), "quad exact_gradient");
    return Vector(qc_.A.transpose() * (qc_.A * x + qc_.b));
  }

  /// -(A^T A)^{-1} A^T b; requires full column rank.
  Vector minimizer() const { return -qc_.A.colPivHouseholderQr().solve(qc_.b); }

  std::uint64_t content_hash() const override {
    const Index dims[2] = {q(), p()};
    std::uint64_t h = fnv1a(dims, sizeof dims);
    h = fnv1a(qc_.A.data(), sizeof(double) * static_cast<std::size_t>(qc_.A.size()), h);
    return fnv1a(qc_.b.data(), sizeof(double) * static_cast<std::size_t>(qc_.b.size()), h);
  }

 private:
  Jacobian draw_jacobian_noise(Stream& stream) const {
    Matrix jac = qc_.A;
    if (qc_.sigma_J > 0) {
      const Vector xi = stream.normal_vector(q(), qc_.sigma_J / std::sqrt(static_cast<double>(q() * p())));
      const Vector eta = stream.normal_vector(p());
      jac.noalias() += xi * eta.transpose();
    }
    return Jacobian::dense(std::move(jac));
  }

  QuadCompose qc_;
};

inline QuadComposeProblem quad_compose_problem(QuadCompose qc) { return QuadComposeProblem(std::move(qc)); }

/// Random well-conditioned instance: A has i.i.d. N(0, 1/q) entries plus the
/// identity on its top block, b ~ N(0, 1).
inline QuadCompose random_quad_compose(Index p, Index q, std::uint64_t seed, double sigma = 0.0) {
  Stream s = SeedTree(seed).stream(0, StreamKind::kData);
  QuadCompose qc;
  qc.A = s.normal_matrix(q, p, 1.0 / std::sqrt(static_cast<double>(q)));
  qc.A.topRows(std::min(p, q)) += Matrix::Identity(std::min(p, q), p);
  qc.b = s.normal_vector(q);
  qc.sigma_g = qc.sigma_J = qc.sigma_f = sigma;
  return qc;
}

/// Outer oracle of an identity composition: grad f_nu(y).
using OuterOracle = std::function<Vector(const Vector& y, Stream& stream)>;

/// g_omega(x) = x exactly, q = p.
class IdentityProblem final : public CompositionalProblem {
 public:
  IdentityProblem(OuterOracle outer, Index p) : outer_(std::move(outer)), p_(p) {
    if (p < 1) throw DimensionMismatch("identity problem needs p >= 1");
  }

  Index p() const override { return p_; }
  Index q() const override { return p_; }

  InnerSample draw_inner(const Vector& z, Stream&) const override {
    expect_dim(z.size(), p_, "identity inner");
    return {z, Jacobian::identity(p_)};
  }
  Vector draw_inner_value(const Vector& z, Stream&) const override {
    expect_dim(z.size(), p_, "identity inner");
    return z;
  }
  Jacobian draw_inner_jacobian(const Vector& z, Stream&) const override {
    expect_dim(z.size(), p_, "identity inner");
    return Jacobian::from_transpose_action(p_, p_, [](const Vector& v) { return v; });
  }
  Vector draw_outer(const Vector& y, Stream& stream) const override {
    expect_dim(y.size(), p_, "identity outer");
    return outer_(y, stream);
  }
  std::optional<Vector> exact_inner(const Vector& x) const override { return x; }

 private:
  OuterOracle outer_;
  Index p_;
};

inline IdentityProblem identity_problem(OuterOracle outer, Index p) { return IdentityProblem(std::move(outer), p); }

}  // namespace cadam
