#pragma once

// The nested-expectation problem
//
//     min_x  J(x) = E_nu[ f_nu( E_omega[ g_omega(x) ] ) ],   g: R^p -> R^q,
//
// exposed only through two sampling oracles: one returning g_omega(z) together
// with its Jacobian, one returning grad f_nu(y).

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "cadam/rng.hpp"
#include "cadam/types.hpp"

namespace cadam {

/// Jacobian of one inner sample, q x p. Either a dense matrix or an operator
/// that applies the transpose, v (in R^q) -> J^T v (in R^p). The optimizers
/// only ever need J^T v; the dense form exists for small problems and tests.
class Jacobian {
 public:
  using TransposeAction = std::function<Vector(const Vector&)>;

  Jacobian() = default;

  static Jacobian dense(Matrix m) {
    Jacobian j;
    j.rows_ = m.rows();
    j.cols_ = m.cols();
    j.dense_ = std::move(m);
    return j;
  }

  static Jacobian identity(Index n) { return dense(Matrix::Identity(n, n)); }

  static Jacobian from_transpose_action(Index rows, Index cols, TransposeAction action) {
    Jacobian j;
    j.rows_ = rows;
    j.cols_ = cols;
    j.action_ = std::move(action);
    return j;
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool is_dense() const { return dense_.has_value(); }

  Vector apply_transpose(const Vector& v) const {
    expect_dim(v.size(), rows_, "Jacobian::apply_transpose");
    if (dense_) return dense_->transpose() * v;
    return action_(v);
  }

  /// Materializes J row by row from J^T e_k. Costs q transpose actions.
  Matrix to_dense() const {
    if (dense_) return *dense_;
    Matrix m(rows_, cols_);
    for (Index k = 0; k < rows_; ++k) m.row(k) = action_(Vector::Unit(rows_, k)).transpose();
    return m;
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::optional<Matrix> dense_;
  TransposeAction action_;
};

struct InnerSample {
  Vector value;       // g_omega(z), in R^q
  Jacobian jacobian;  // grad g_omega(z), q x p
};

class CompositionalProblem {
 public:
  virtual ~CompositionalProblem() = default;

  /// Dimension of the decision variable x.
  virtual Index p() const = 0;
  /// Dimension of the inner image y = g(x).
  virtual Index q() const = 0;

  /// One draw of omega evaluated at z.
  virtual InnerSample draw_inner(const Vector& z, Stream& stream) const = 0;
  /// One draw of nu evaluated at y: grad f_nu(y).
  virtual Vector draw_outer(const Vector& y, Stream& stream) const = 0;

  /// Same omega as draw_inner would use, value only.
  virtual Vector draw_inner_value(const Vector& z, Stream& stream) const { return draw_inner(z, stream).value; }
  /// Same omega as draw_inner would use, Jacobian only.
  virtual Jacobian draw_inner_jacobian(const Vector& z, Stream& stream) const {
    return draw_inner(z, stream).jacobian;
  }

  /// g(x) = E[g_omega(x)], when it is computable.
  virtual std::optional<Vector> exact_inner(const Vector&) const { return std::nullopt; }
  virtual std::optional<double> exact_objective(const Vector&) const { return std::nullopt; }
  virtual std::optional<Vector> exact_gradient(const Vector&) const { return std::nullopt; }

  /// When true, one index stream drives both the outer and the inner-Jacobian
  /// oracle within a step (nu and omega dependent).
  virtual bool coupled_sampling() const { return false; }

  /// Content hash used to key J* caches; 0 means "do not cache".
  virtual std::uint64_t content_hash() const { return 0; }
};

/// Problems whose expectations are uniform averages over finitely many atoms.
/// Sampling draws atom indices uniformly with replacement.
class FiniteSumProblem : public CompositionalProblem {
 public:
  virtual std::size_t inner_atoms() const = 0;
  virtual std::size_t outer_atoms() const = 0;
  virtual InnerSample inner_atom(std::size_t j, const Vector& z) const = 0;
  virtual Vector inner_atom_value(std::size_t j, const Vector& z) const { return inner_atom(j, z).value; }
  virtual Vector outer_atom(std::size_t i, const Vector& y) const = 0;

  InnerSample draw_inner(const Vector& z, Stream& stream) const override {
    return inner_atom(stream.index(inner_atoms()), z);
  }
  Vector draw_inner_value(const Vector& z, Stream& stream) const override {
    return inner_atom_value(stream.index(inner_atoms()), z);
  }
  Vector draw_outer(const Vector& y, Stream& stream) const override {
    return outer_atom(stream.index(outer_atoms()), y);
  }
};

inline std::vector<InnerSample> sample_inner(const CompositionalProblem& problem, const Vector& z, std::size_t K,
                                             Stream& stream) {
  expect_dim(z.size(), problem.p(), "sample_inner");
  if (K < 1) throw InvalidParams("sample_inner: batch size must be >= 1");
  std::vector<InnerSample> out;
  out.reserve(K);
  for (std::size_t k = 0; k < K; ++k) out.push_back(problem.draw_inner(z, stream));
  return out;
}

inline std::vector<Vector> sample_outer(const CompositionalProblem& problem, const Vector& y, std::size_t K,
                                        Stream& stream) {
  expect_dim(y.size(), problem.q(), "sample_outer");
  if (K < 1) throw InvalidParams("sample_outer: batch size must be >= 1");
  std::vector<Vector> out;
  out.reserve(K);
  for (std::size_t k = 0; k < K; ++k) out.push_back(problem.draw_outer(y, stream));
  return out;
}

/// Mean of K outer gradients at y.
inline Vector mean_outer_gradient(const CompositionalProblem& problem, const Vector& y, std::size_t K,
                                  Stream& stream) {
  expect_dim(y.size(), problem.q(), "mean_outer_gradient");
  Vector acc = Vector::Zero(problem.q());
  for (std::size_t k = 0; k < K; ++k) acc += problem.draw_outer(y, stream);
  return acc / static_cast<double>(K);
}

/// Mean of K inner values at z.
inline Vector mean_inner_value(const CompositionalProblem& problem, const Vector& z, std::size_t K, Stream& stream) {
  expect_dim(z.size(), problem.p(), "mean_inner_value");
  Vector acc = Vector::Zero(problem.q());
  for (std::size_t k = 0; k < K; ++k) acc += problem.draw_inner_value(z, stream);
  return acc / static_cast<double>(K);
}

/// (mean of K sampled Jacobians at x)^T v, computed as the mean of J_k^T v.
inline Vector mean_jacobian_transpose_times(const CompositionalProblem& problem, const Vector& x, std::size_t K,
                                            Stream& stream, const Vector& v) {
  expect_dim(x.size(), problem.p(), "mean_jacobian_transpose_times");
  expect_dim(v.size(), problem.q(), "mean_jacobian_transpose_times");
  Vector acc = Vector::Zero(problem.p());
  for (std::size_t k = 0; k < K; ++k) acc += problem.draw_inner_jacobian(x, stream).apply_transpose(v);
  return acc / static_cast<double>(K);
}

}  // namespace cadam
