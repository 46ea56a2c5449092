#pragma once

// Trajectory drivers: repeat a step function, keep the oracle-sample ledger,
// evaluate exact metrics at checkpoints and choose the returned iterate.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cadam/optimizers.hpp"
#include "cadam/problem.hpp"
#include "cadam/schedule.hpp"

namespace cadam {

struct TraceRow {
  std::size_t t = 0;
  std::size_t cumulative_samples = 0;
  double J_exact = std::numeric_limits<double>::quiet_NaN();
  double grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
  double tracking_err = std::numeric_limits<double>::quiet_NaN();
  double alpha_t = 0.0;
  double beta_t = 0.0;
  std::int64_t wallclock_ns = 0;
};

/// Row t describes the iterate after step t, i.e. (x_{t+1}, y_{t+1}), and the
/// samples consumed by steps 1..t.
struct RunTrace {
  std::vector<TraceRow> rows;

  const TraceRow* at(std::size_t t) const {
    for (const auto& r : rows)
      if (r.t == t) return &r;
    return nullptr;
  }
};

enum class OutputRule { kUniformIterate, kLastIterate, kBestEvaluated };

inline OutputRule parse_output_rule(const std::string& s) {
  if (s == "uniform" || s == "uniform-iterate") return OutputRule::kUniformIterate;
  if (s == "last" || s == "last-iterate") return OutputRule::kLastIterate;
  if (s == "best" || s == "best-evaluated") return OutputRule::kBestEvaluated;
  throw InvalidConfig("unknown output rule '" + s + "'");
}

inline std::string to_string(OutputRule r) {
  switch (r) {
    case OutputRule::kUniformIterate: return "uniform-iterate";
    case OutputRule::kLastIterate: return "last-iterate";
    case OutputRule::kBestEvaluated: return "best-evaluated";
  }
  return "?";
}

/// Which iterations get a trace row. The final step always gets one.
struct Checkpoints {
  enum class Mode { kEvery, kGeometric, kList };
  Mode mode = Mode::kEvery;
  std::vector<std::size_t> list;

  static Checkpoints every() { return {}; }
  static Checkpoints geometric() { return {Mode::kGeometric, {}}; }
  static Checkpoints at(std::vector<std::size_t> ts) { return {Mode::kList, std::move(ts)}; }

  bool contains(std::size_t t) const {
    switch (mode) {
      case Mode::kEvery: return true;
      case Mode::kGeometric: return (t & (t - 1)) == 0;
      case Mode::kList:
        for (auto c : list)
          if (c == t) return true;
        return false;
    }
    return false;
  }
};

struct Box {
  double lo = -1.0;
  double hi = 1.0;
};

struct RunOptions {
  OutputRule output_rule = OutputRule::kUniformIterate;
  Checkpoints checkpoints = Checkpoints::every();
  /// Stop before a step that would push cumulative samples past the budget.
  std::optional<std::size_t> sample_budget;
  /// Clip x into the box after every step.
  std::optional<Box> box;
  bool record_wallclock = false;
};

struct RunResult {
  Vector x_out;
  Vector x_last;
  RunTrace trace;
  std::size_t steps = 0;
  std::size_t total_samples = 0;
};

/// What a step function reports back to the driver.
struct StepOutcome {
  Vector* x = nullptr;        // post-step iterate, may be clipped in place
  const Vector* y = nullptr;  // tracking variable, null if the method has none
  std::size_t samples = 0;
  double alpha = 0.0;
  double beta = 0.0;
};

inline double tracking_error_of(const CompositionalProblem& problem, const Vector& x, const Vector& y) {
  auto g = problem.exact_inner(x);
  if (!g) return std::numeric_limits<double>::quiet_NaN();
  return (*g - y).squaredNorm();
}

/// Generic driver. `step(t)` executes step t; `cost(t)` is the sample count
/// step t will consume (used for the budget check).
inline RunResult run_loop(const CompositionalProblem& problem, const Vector& x1, std::size_t T,
                          const SeedTree& seeds, const RunOptions& options,
                          const std::function<StepOutcome(std::size_t)>& step,
                          const std::function<std::size_t(std::size_t)>& cost) {
  if (T < 1) throw InvalidConfig("T must be >= 1");
  expect_dim(x1.size(), problem.p(), "x1");
  if (options.output_rule == OutputRule::kBestEvaluated && !problem.exact_objective(x1)) {
    throw InvalidConfig("best-evaluated output rule needs an exact objective");
  }

  RunResult result;
  Stream chooser = seeds.stream(0, StreamKind::kOutputRule);
  Vector chosen = x1;  // reservoir over {x_1, ..., x_t}
  Vector best = x1;
  double best_J = options.output_rule == OutputRule::kBestEvaluated ? *problem.exact_objective(x1) : 0.0;

  const auto start = std::chrono::steady_clock::now();
  std::size_t cumulative = 0;
  Vector x_prev = x1;
  std::size_t t = 1;
  for (; t <= T; ++t) {
    if (options.sample_budget && cumulative + cost(t) > *options.sample_budget) break;
    if (t > 1 && chooser.uniform(0.0, 1.0) * static_cast<double>(t) < 1.0) chosen = x_prev;

    StepOutcome out = step(t);
    cumulative += out.samples;
    if (options.box) *out.x = out.x->cwiseMax(options.box->lo).cwiseMin(options.box->hi);
    if (!out.x->allFinite() || (out.y && !out.y->allFinite())) {
      throw NumericFailure(t, "non-finite iterate");
    }

    const bool last = t == T || (options.sample_budget && cumulative + cost(t + 1) > *options.sample_budget);
    if (options.output_rule == OutputRule::kBestEvaluated) {
      const double J = *problem.exact_objective(*out.x);
      if (J < best_J) {
        best_J = J;
        best = *out.x;
      }
    }
    if (options.checkpoints.contains(t) || last) {
      TraceRow row;
      row.t = t;
      row.cumulative_samples = cumulative;
      if (auto J = problem.exact_objective(*out.x)) row.J_exact = *J;
      if (auto g = problem.exact_gradient(*out.x)) row.grad_norm_sq = g->squaredNorm();
      if (out.y) row.tracking_err = tracking_error_of(problem, *out.x, *out.y);
      row.alpha_t = out.alpha;
      row.beta_t = out.beta;
      if (options.record_wallclock) {
        row.wallclock_ns =
            std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
      }
      result.trace.rows.push_back(row);
    }
    x_prev = *out.x;
    if (last) {
      ++t;
      break;
    }
  }
  result.steps = t - 1;
  if (result.steps == 0) throw InvalidConfig("sample budget too small for a single step");
  result.total_samples = cumulative;
  result.x_last = x_prev;
  switch (options.output_rule) {
    case OutputRule::kUniformIterate: result.x_out = chosen; break;
    case OutputRule::kLastIterate: result.x_out = x_prev; break;
    case OutputRule::kBestEvaluated: result.x_out = best; break;
  }
  return result;
}

/// Problem used at step t. Lets a run resample its problem per iteration
/// (e.g. a fresh meta-batch of tasks) while metrics use a fixed evaluator.
using ProblemAt = std::function<const CompositionalProblem&(std::size_t t)>;

namespace detail {

inline ProblemAt fixed(const CompositionalProblem& problem) {
  return [&problem](std::size_t) -> const CompositionalProblem& { return problem; };
}

}  // namespace detail

/// C-ADAM for T iterations under the power-law schedule.
inline RunResult cadam_run(const ProblemAt& at, const CompositionalProblem& evaluator, const Vector& x1,
                           const ScheduleConfig& cfg, std::size_t T, const SeedTree& seeds,
                           const RunOptions& options = {}, CAdamState* final_state = nullptr) {
  cfg.validate();
  CAdamState state = CAdamState::initial(x1, evaluator.q());
  auto step = [&](std::size_t t) {
    const StepParams params = theorem1_schedule(t, cfg);
    auto [next, report] = cadam_step(at(t), state, params, seeds);
    state = std::move(next);
    return StepOutcome{&state.x, &state.y, report.total_samples(), params.alpha, params.beta};
  };
  auto cost = [&](std::size_t t) { return theorem1_schedule(t, cfg).samples(); };
  RunResult r = run_loop(evaluator, x1, T, seeds, options, step, cost);
  if (final_state) *final_state = state;
  return r;
}

inline RunResult cadam_run(const CompositionalProblem& problem, const Vector& x1, const ScheduleConfig& cfg,
                           std::size_t T, const SeedTree& seeds, const RunOptions& options = {},
                           CAdamState* final_state = nullptr) {
  return cadam_run(detail::fixed(problem), problem, x1, cfg, T, seeds, options, final_state);
}

inline RunResult scgd_run(const ProblemAt& at, const CompositionalProblem& evaluator, const Vector& x1,
                          const BaselineSchedule& schedule, std::size_t T, const SeedTree& seeds,
                          const RunOptions& options = {}) {
  schedule.validate();
  BaselineState state = BaselineState::initial(x1, evaluator.q());
  auto step = [&](std::size_t t) {
    auto [next, report] = scgd_step(at(t), state, schedule, seeds);
    state = std::move(next);
    return StepOutcome{&state.x, &state.y, report.total_samples(), schedule.alpha(t), schedule.beta(t)};
  };
  auto cost = [&](std::size_t) { return 3 * schedule.K; };
  return run_loop(evaluator, x1, T, seeds, options, step, cost);
}

inline RunResult scgd_run(const CompositionalProblem& problem, const Vector& x1, const BaselineSchedule& schedule,
                          std::size_t T, const SeedTree& seeds, const RunOptions& options = {}) {
  return scgd_run(detail::fixed(problem), problem, x1, schedule, T, seeds, options);
}

inline RunResult ascpg_run(const ProblemAt& at, const CompositionalProblem& evaluator, const Vector& x1,
                           const BaselineSchedule& schedule, std::size_t T, const SeedTree& seeds,
                           const RunOptions& options = {}) {
  schedule.validate();
  BaselineState state = BaselineState::initial(x1, evaluator.q());
  auto step = [&](std::size_t t) {
    auto [next, report] = ascpg_step(at(t), state, schedule, seeds);
    state = std::move(next);
    return StepOutcome{&state.x, &state.y, report.total_samples(), schedule.alpha(t), schedule.beta(t)};
  };
  auto cost = [&](std::size_t) { return 3 * schedule.K; };
  return run_loop(evaluator, x1, T, seeds, options, step, cost);
}

inline RunResult ascpg_run(const CompositionalProblem& problem, const Vector& x1, const BaselineSchedule& schedule,
                           std::size_t T, const SeedTree& seeds, const RunOptions& options = {}) {
  return ascpg_run(detail::fixed(problem), problem, x1, schedule, T, seeds, options);
}

/// Non-compositional baselines driven by plain_composite_gradient.
struct AdamConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t K = 1;
};

struct SgdConfig {
  double alpha = 0.01;
  std::size_t K = 1;
};

inline RunResult adam_run(const ProblemAt& at, const CompositionalProblem& evaluator, const Vector& x1,
                          const AdamConfig& cfg, std::size_t T, const SeedTree& seeds,
                          const RunOptions& options = {}) {
  if (cfg.K < 1) throw InvalidConfig("adam batch size must be >= 1");
  AdamState state = AdamState::initial(x1);
  auto step = [&](std::size_t t) {
    auto [g, report] = plain_composite_gradient(at(t), state.x, cfg.K, seeds, t);
    state = adam_step(state, g, cfg.alpha, cfg.beta1, cfg.beta2, cfg.epsilon);
    return StepOutcome{&state.x, nullptr, report.total_samples(), cfg.alpha, 1.0};
  };
  auto cost = [&](std::size_t) { return 3 * cfg.K; };
  return run_loop(evaluator, x1, T, seeds, options, step, cost);
}

inline RunResult adam_run(const CompositionalProblem& problem, const Vector& x1, const AdamConfig& cfg,
                          std::size_t T, const SeedTree& seeds, const RunOptions& options = {}) {
  return adam_run(detail::fixed(problem), problem, x1, cfg, T, seeds, options);
}

inline RunResult sgd_run(const ProblemAt& at, const CompositionalProblem& evaluator, const Vector& x1,
                         const SgdConfig& cfg, std::size_t T, const SeedTree& seeds, const RunOptions& options = {}) {
  if (cfg.K < 1) throw InvalidConfig("sgd batch size must be >= 1");
  Vector x = x1;
  auto step = [&](std::size_t t) {
    auto [g, report] = plain_composite_gradient(at(t), x, cfg.K, seeds, t);
    x = sgd_step(x, g, cfg.alpha);
    return StepOutcome{&x, nullptr, report.total_samples(), cfg.alpha, 1.0};
  };
  auto cost = [&](std::size_t) { return 3 * cfg.K; };
  return run_loop(evaluator, x1, T, seeds, options, step, cost);
}

inline RunResult sgd_run(const CompositionalProblem& problem, const Vector& x1, const SgdConfig& cfg, std::size_t T,
                         const SeedTree& seeds, const RunOptions& options = {}) {
  return sgd_run(detail::fixed(problem), problem, x1, cfg, T, seeds, options);
}

}  // namespace cadam
