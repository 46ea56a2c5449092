#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "cadam/problem.hpp"
#include "cadam/rng.hpp"
#include "cadam/schedule.hpp"
#include "cadam/types.hpp"

namespace cadam {

/// Iterate of C-ADAM. `t` is the index of the next step to execute.
struct CAdamState {
  Vector x;  // main variable
  Vector y;  // tracking estimate of g(x)
  Vector z;  // extrapolation point
  Vector m;  // first moment
  Vector v;  // second moment, elementwise >= 0
  std::size_t t = 1;

  /// z_1 = x_1, y_1 = 0, m_0 = v_0 = 0.
  static CAdamState initial(const Vector& x1, Index q) {
    CAdamState s;
    s.x = x1;
    s.z = x1;
    s.y = Vector::Zero(q);
    s.m = Vector::Zero(x1.size());
    s.v = Vector::Zero(x1.size());
    s.t = 1;
    return s;
  }
};

/// Oracle consumption of one step and the composite gradient it used.
struct StepReport {
  std::size_t inner_value_samples = 0;
  std::size_t inner_grad_samples = 0;
  std::size_t outer_grad_samples = 0;
  Vector composite_grad_estimate;

  std::size_t total_samples() const { return inner_value_samples + inner_grad_samples + outer_grad_samples; }
};

namespace detail {

inline void check_state(const CompositionalProblem& problem, const Vector& x, const Vector& y) {
  expect_dim(x.size(), problem.p(), "state.x");
  expect_dim(y.size(), problem.q(), "state.y");
}

/// Streams for one step: the inner-Jacobian stream doubles as the outer one
/// when the problem couples the two draws.
inline Stream outer_stream(const CompositionalProblem& problem, const SeedTree& seeds, std::size_t t) {
  return seeds.stream(t, problem.coupled_sampling() ? StreamKind::kInnerJacobian : StreamKind::kOuterGrad);
}

}  // namespace detail

/// One iteration of C-ADAM (no bias correction of m, v).
inline std::pair<CAdamState, StepReport> cadam_step(const CompositionalProblem& problem, const CAdamState& state,
                                                    const StepParams& params, const SeedTree& seeds) {
  detail::check_state(problem, state.x, state.y);
  expect_dim(state.m.size(), problem.p(), "state.m");
  expect_dim(state.v.size(), problem.p(), "state.v");
  if (!(params.beta > 0.0) || params.beta > 1.0) throw InvalidParams("cadam_step: beta_t must lie in (0, 1]");
  if (params.K1 < 1 || params.K2 < 1 || params.K3 < 1) throw InvalidParams("cadam_step: batch sizes must be >= 1");

  Stream outer = detail::outer_stream(problem, seeds, state.t);
  Stream inner_jac = seeds.stream(state.t, StreamKind::kInnerJacobian);
  Stream inner_val = seeds.stream(state.t, StreamKind::kInnerValue);

  const Vector outer_mean = mean_outer_gradient(problem, state.y, params.K1, outer);
  Vector estimate = mean_jacobian_transpose_times(problem, state.x, params.K2, inner_jac, outer_mean);

  CAdamState next;
  next.t = state.t + 1;
  next.m = params.gamma1 * state.m + (1.0 - params.gamma1) * estimate;
  next.v = params.gamma2 * state.v + (1.0 - params.gamma2) * estimate.cwiseAbs2();
  next.x = state.x.array() - params.alpha * next.m.array() / (next.v.array().sqrt() + params.epsilon);
  const double inv_beta = 1.0 / params.beta;
  next.z = (1.0 - inv_beta) * state.x + inv_beta * next.x;
  next.y = (1.0 - params.beta) * state.y + params.beta * mean_inner_value(problem, next.z, params.K3, inner_val);

  StepReport report;
  report.outer_grad_samples = params.K1;
  report.inner_grad_samples = params.K2;
  report.inner_value_samples = params.K3;
  report.composite_grad_estimate = std::move(estimate);
  return {std::move(next), std::move(report)};
}

/// Power-law schedule for the non-adaptive compositional baselines:
/// alpha_t = C_alpha t^{-alpha_exponent}, beta_t = min(1, C_beta t^{-beta_exponent}).
struct BaselineSchedule {
  double C_alpha = 1.0;
  double C_beta = 1.0;
  double alpha_exponent = 0.75;
  double beta_exponent = 0.5;
  std::size_t K = 1;

  /// Basic SCGD, nonconvex setting: alpha = t^{-3/4}, beta = t^{-1/2}.
  static BaselineSchedule scgd() { return {1.0, 1.0, 0.75, 0.5, 1}; }
  /// ASC-PG, nonconvex setting: alpha = t^{-5/9}, beta = 2 t^{-4/9}.
  static BaselineSchedule ascpg() { return {1.0, 2.0, 5.0 / 9.0, 4.0 / 9.0, 1}; }

  double alpha(std::size_t t) const { return C_alpha / std::pow(static_cast<double>(t), alpha_exponent); }
  double beta(std::size_t t) const {
    return std::min(1.0, C_beta / std::pow(static_cast<double>(t), beta_exponent));
  }

  void validate() const {
    if (!(C_alpha > 0.0) || !(C_beta > 0.0)) throw InvalidConfig("baseline constants must be positive");
    if (!(alpha_exponent >= 0.0) || !(beta_exponent >= 0.0)) throw InvalidConfig("baseline exponents must be >= 0");
    if (K < 1) throw InvalidConfig("baseline batch size must be >= 1");
  }
};

/// Iterate of SCGD / ASC-PG. `t` is the index of the next step.
struct BaselineState {
  Vector x;
  Vector y;
  std::size_t t = 1;

  static BaselineState initial(const Vector& x1, Index q) { return {x1, Vector::Zero(q), 1}; }
};

/// Basic SCGD: y_{t+1} = (1-beta) y_t + beta g(x_t);
///             x_{t+1} = x_t - alpha grad g(x_t)^T grad f(y_{t+1}).
inline std::pair<BaselineState, StepReport> scgd_step(const CompositionalProblem& problem,
                                                      const BaselineState& state,
                                                      const BaselineSchedule& schedule, const SeedTree& seeds) {
  detail::check_state(problem, state.x, state.y);
  const double alpha = schedule.alpha(state.t);
  const double beta = schedule.beta(state.t);
  Stream outer = detail::outer_stream(problem, seeds, state.t);
  Stream inner_jac = seeds.stream(state.t, StreamKind::kInnerJacobian);
  Stream inner_val = seeds.stream(state.t, StreamKind::kInnerValue);

  BaselineState next;
  next.t = state.t + 1;
  next.y = (1.0 - beta) * state.y + beta * mean_inner_value(problem, state.x, schedule.K, inner_val);
  const Vector outer_mean = mean_outer_gradient(problem, next.y, schedule.K, outer);
  Vector estimate = mean_jacobian_transpose_times(problem, state.x, schedule.K, inner_jac, outer_mean);
  next.x = state.x - alpha * estimate;

  StepReport report{schedule.K, schedule.K, schedule.K, std::move(estimate)};
  return {std::move(next), std::move(report)};
}

/// ASC-PG: plain gradient step on grad g(x_t)^T grad f(y_t), then the same
/// extrapolated tracking update as C-ADAM.
inline std::pair<BaselineState, StepReport> ascpg_step(const CompositionalProblem& problem,
                                                       const BaselineState& state,
                                                       const BaselineSchedule& schedule, const SeedTree& seeds) {
  detail::check_state(problem, state.x, state.y);
  const double alpha = schedule.alpha(state.t);
  const double beta = schedule.beta(state.t);
  Stream outer = detail::outer_stream(problem, seeds, state.t);
  Stream inner_jac = seeds.stream(state.t, StreamKind::kInnerJacobian);
  Stream inner_val = seeds.stream(state.t, StreamKind::kInnerValue);

  const Vector outer_mean = mean_outer_gradient(problem, state.y, schedule.K, outer);
  Vector estimate = mean_jacobian_transpose_times(problem, state.x, schedule.K, inner_jac, outer_mean);

  BaselineState next;
  next.t = state.t + 1;
  next.x = state.x - alpha * estimate;
  const double inv_beta = 1.0 / beta;
  const Vector z = (1.0 - inv_beta) * state.x + inv_beta * next.x;
  next.y = (1.0 - beta) * state.y + beta * mean_inner_value(problem, z, schedule.K, inner_val);

  StepReport report{schedule.K, schedule.K, schedule.K, std::move(estimate)};
  return {std::move(next), std::move(report)};
}

/// Composite gradient with no tracking variable: the inner mean is taken
/// fresh at x, so the estimate is biased for nonlinear f. This is what a
/// standard (non-compositional) optimizer sees, e.g. first-order MAML with
/// resampled batches.
inline std::pair<Vector, StepReport> plain_composite_gradient(const CompositionalProblem& problem, const Vector& x,
                                                              std::size_t K, const SeedTree& seeds, std::size_t t) {
  expect_dim(x.size(), problem.p(), "plain_composite_gradient");
  Stream outer = detail::outer_stream(problem, seeds, t);
  Stream inner_jac = seeds.stream(t, StreamKind::kInnerJacobian);
  Stream inner_val = seeds.stream(t, StreamKind::kInnerValue);
  const Vector y = mean_inner_value(problem, x, K, inner_val);
  const Vector outer_mean = mean_outer_gradient(problem, y, K, outer);
  Vector g = mean_jacobian_transpose_times(problem, x, K, inner_jac, outer_mean);
  StepReport report{K, K, K, g};
  return {std::move(g), std::move(report)};
}

/// Reference ADAM without bias correction.
struct AdamState {
  Vector x;
  Vector m;
  Vector v;

  static AdamState initial(const Vector& x1) {
    return {x1, Vector::Zero(x1.size()), Vector::Zero(x1.size())};
  }
};

inline AdamState adam_step(const AdamState& state, const Vector& gradient, double alpha, double beta1, double beta2,
                           double epsilon) {
  expect_dim(gradient.size(), state.x.size(), "adam_step");
  AdamState next;
  next.m = beta1 * state.m + (1.0 - beta1) * gradient;
  next.v = beta2 * state.v + (1.0 - beta2) * gradient.cwiseAbs2();
  next.x = state.x.array() - alpha * next.m.array() / (next.v.array().sqrt() + epsilon);
  return next;
}

inline Vector sgd_step(const Vector& x, const Vector& gradient, double alpha) {
  expect_dim(gradient.size(), x.size(), "sgd_step");
  return x - alpha * gradient;
}

}  // namespace cadam
