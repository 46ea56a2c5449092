#pragma once

// One-step MAML as a compositional problem.
//
// Inner map, one column per task j:   G_xi(x)[:, j] = x - alpha grad L_j(x; xi_j)
// Outer map:                          f_xi'(A) = (1/K) sum_j L_j(A[:, j]; xi'_j)
//
// The inner Jacobian of column j is I - alpha H_j(x), applied through a
// Hessian-vector product, never formed.

#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "cadam/meta/mlp.hpp"
#include "cadam/optimizers.hpp"
#include "cadam/problem.hpp"

namespace cadam::meta {

/// target = amplitude * sin(input + phase)
struct SineTask {
  double amplitude = 1.0;  // in [0.1, 5.0]
  double phase = 0.0;      // in [0, 2 pi]

  double operator()(double input) const { return amplitude * std::sin(input + phase); }

  static SineTask sample(Stream& s) {
    const double a = s.uniform(0.1, 5.0);
    const double b = s.uniform(0.0, 2.0 * std::numbers::pi);
    return {a, b};
  }
};

struct TaskBatch {
  SineTask task;
  Matrix inputs;   // 1 x M, uniform in [-5, 5]
  Matrix targets;  // 1 x M

  Index size() const { return inputs.cols(); }

  static TaskBatch sample(const SineTask& task, Index M, Stream& s) {
    TaskBatch b{task, Matrix(1, M), Matrix(1, M)};
    for (Index i = 0; i < M; ++i) {
      b.inputs(0, i) = s.uniform(-5.0, 5.0);
      b.targets(0, i) = task(b.inputs(0, i));
    }
    return b;
  }
};

inline LossGrad mlp_loss_grad(const MlpArchitecture& arch, const Vector& params, const TaskBatch& batch) {
  return mlp_loss_grad(arch, params, batch.inputs, batch.targets);
}

inline LossGrad mlp_loss_grad(const Mlp& net, const TaskBatch& batch) {
  return mlp_loss_grad(net.arch, net.params, batch.inputs, batch.targets);
}

inline Vector hvp(const MlpArchitecture& arch, const Vector& params, const TaskBatch& batch, const Vector& u) {
  return mlp_hvp(arch, params, batch.inputs, batch.targets, u);
}

inline Vector hvp(const Mlp& net, const TaskBatch& batch, const Vector& u) {
  return hvp(net.arch, net.params, batch, u);
}

/// Mean squared error (not the summed training loss) on a batch.
inline double mse(const MlpArchitecture& arch, const Vector& params, const TaskBatch& batch) {
  return (mlp_forward(arch, params, batch.inputs) - batch.targets).squaredNorm() /
         static_cast<double>(batch.size());
}

/// Fixed data for a deterministic (full-batch) version of the meta-objective.
struct FrozenData {
  std::vector<TaskBatch> inner;  // one per task
  std::vector<TaskBatch> outer;  // one per task
};

class MamlProblem final : public CompositionalProblem {
 public:
  MamlProblem(MlpArchitecture arch, std::vector<SineTask> tasks, double alpha_inner, Index M)
      : arch_(std::move(arch)), tasks_(std::move(tasks)), alpha_(alpha_inner), M_(M) {
    arch_.validate();
    if (arch_.sizes.front() != 1 || arch_.sizes.back() != 1) throw InvalidConfig("sine regression needs a 1-in 1-out net");
    if (tasks_.empty()) throw InvalidConfig("MAML needs at least one task");
    if (alpha_ < 0.0) throw InvalidConfig("inner step size must be >= 0");
    if (M_ < 1) throw InvalidConfig("batch size M must be >= 1");
    P_ = arch_.parameter_count();
  }

  /// Replace sampling by fixed batches; enables the exact_* members.
  void freeze(FrozenData data) {
    if (data.inner.size() != tasks_.size() || data.outer.size() != tasks_.size()) {
      throw DimensionMismatch("frozen data needs one inner and one outer batch per task");
    }
    frozen_ = std::move(data);
  }

  /// Draws and freezes one inner batch of M points and one outer batch of
  /// outer_points (default M) per task.
  void freeze_from(Stream& s, Index outer_points = 0) {
    if (outer_points <= 0) outer_points = M_;
    FrozenData d;
    for (const auto& task : tasks_) d.inner.push_back(TaskBatch::sample(task, M_, s));
    for (const auto& task : tasks_) d.outer.push_back(TaskBatch::sample(task, outer_points, s));
    freeze(std::move(d));
  }

  const MlpArchitecture& architecture() const { return arch_; }
  const std::vector<SineTask>& tasks() const { return tasks_; }
  std::size_t task_count() const { return tasks_.size(); }
  double alpha_inner() const { return alpha_; }
  Index parameter_count() const { return P_; }
  bool is_frozen() const { return frozen_.has_value(); }

  Index p() const override { return P_; }
  Index q() const override { return P_ * static_cast<Index>(tasks_.size()); }

  InnerSample draw_inner(const Vector& z, Stream& stream) const override {
    expect_dim(z.size(), P_, "maml inner");
    auto batches = inner_batches(stream);
    Vector value(q());
    for (std::size_t j = 0; j < batches.size(); ++j) {
      value.segment(static_cast<Index>(j) * P_, P_) = z - alpha_ * mlp_loss_grad(arch_, z, batches[j]).grad;
    }
    return {std::move(value), jacobian_for(z, std::move(batches))};
  }

  Vector draw_inner_value(const Vector& z, Stream& stream) const override {
    expect_dim(z.size(), P_, "maml inner");
    const auto batches = inner_batches(stream);
    Vector value(q());
    for (std::size_t j = 0; j < batches.size(); ++j) {
      value.segment(static_cast<Index>(j) * P_, P_) = z - alpha_ * mlp_loss_grad(arch_, z, batches[j]).grad;
    }
    return value;
  }

  Jacobian draw_inner_jacobian(const Vector& z, Stream& stream) const override {
    expect_dim(z.size(), P_, "maml inner");
    return jacobian_for(z, inner_batches(stream));
  }

  Vector draw_outer(const Vector& y, Stream& stream) const override {
    expect_dim(y.size(), q(), "maml outer");
    const auto batches = outer_batches(stream);
    return outer_gradient(y, batches);
  }

  std::optional<Vector> exact_inner(const Vector& x) const override {
    if (!frozen_) return std::nullopt;
    expect_dim(x.size(), P_, "maml exact_inner");
    Vector value(q());
    for (std::size_t j = 0; j < tasks_.size(); ++j) {
      value.segment(static_cast<Index>(j) * P_, P_) = x - alpha_ * mlp_loss_grad(arch_, x, frozen_->inner[j]).grad;
    }
    return value;
  }

  std::optional<double> exact_objective(const Vector& x) const override {
    if (!frozen_) return std::nullopt;
    const Vector y = *exact_inner(x);
    double acc = 0.0;
    for (std::size_t j = 0; j < tasks_.size(); ++j) {
      acc += mlp_loss_grad(arch_, y.segment(static_cast<Index>(j) * P_, P_), frozen_->outer[j]).loss;
    }
    return acc / static_cast<double>(tasks_.size());
  }

  std::optional<Vector> exact_gradient(const Vector& x) const override {
    if (!frozen_) return std::nullopt;
    const Vector y = *exact_inner(x);
    const Vector v = outer_gradient(y, frozen_->outer);
    return jacobian_for(x, frozen_->inner).apply_transpose(v);
  }

 private:
  std::vector<TaskBatch> inner_batches(Stream& stream) const {
    if (frozen_) return frozen_->inner;
    std::vector<TaskBatch> out;
    out.reserve(tasks_.size());
    for (const auto& task : tasks_) out.push_back(TaskBatch::sample(task, M_, stream));
    return out;
  }

  std::vector<TaskBatch> outer_batches(Stream& stream) const {
    if (frozen_) return frozen_->outer;
    std::vector<TaskBatch> out;
    out.reserve(tasks_.size());
    for (const auto& task : tasks_) out.push_back(TaskBatch::sample(task, M_, stream));
    return out;
  }

  Vector outer_gradient(const Vector& y, const std::vector<TaskBatch>& batches) const {
    const double scale = 1.0 / static_cast<double>(tasks_.size());
    Vector g(q());
    for (std::size_t j = 0; j < batches.size(); ++j) {
      const Index off = static_cast<Index>(j) * P_;
      g.segment(off, P_) = scale * mlp_loss_grad(arch_, y.segment(off, P_), batches[j]).grad;
    }
    return g;
  }

  /// v = [v_1; ...; v_K]  ->  sum_j (v_j - alpha H_j(z) v_j)
  Jacobian jacobian_for(const Vector& z, std::vector<TaskBatch> batches) const {
    const Index P = P_;
    const double alpha = alpha_;
    return Jacobian::from_transpose_action(
        q(), P, [arch = arch_, z, batches = std::move(batches), P, alpha](const Vector& v) {
          Vector out = Vector::Zero(P);
          for (std::size_t j = 0; j < batches.size(); ++j) {
            const Vector vj = v.segment(static_cast<Index>(j) * P, P);
            out += vj;
            if (alpha != 0.0) out -= alpha * hvp(arch, z, batches[j], vj);
          }
          return out;
        });
  }

  MlpArchitecture arch_;
  std::vector<SineTask> tasks_;
  double alpha_;
  Index M_;
  Index P_ = 0;
  std::optional<FrozenData> frozen_;
};

/// Single task, streaming data.
inline MamlProblem maml_case1_problem(const MlpArchitecture& arch, const SineTask& task, double alpha_inner,
                                      Index M) {
  return MamlProblem(arch, {task}, alpha_inner, M);
}

/// K tasks; the inner image is the p x K matrix G flattened column-major.
inline MamlProblem maml_case2_problem(const MlpArchitecture& arch, std::vector<SineTask> tasks, double alpha_inner,
                                      Index M) {
  return MamlProblem(arch, std::move(tasks), alpha_inner, M);
}

/// Test MSE after k = 0..steps SGD steps on one M-point batch of `task`.
struct FineTuneResult {
  std::vector<double> mse;  // mse[k] after k steps

  double final_mse() const { return mse.back(); }
};

inline FineTuneResult fine_tune_eval(const MlpArchitecture& arch, const Vector& x_meta, const SineTask& task,
                                     std::size_t steps, double alpha_inner, Index M, Stream& stream,
                                     Index eval_points = 100) {
  expect_dim(x_meta.size(), arch.parameter_count(), "fine_tune_eval");
  const TaskBatch train = TaskBatch::sample(task, M, stream);
  const TaskBatch held_out = TaskBatch::sample(task, eval_points, stream);
  FineTuneResult r;
  Vector x = x_meta;
  r.mse.push_back(mse(arch, x, held_out));
  for (std::size_t k = 0; k < steps; ++k) {
    x = sgd_step(x, mlp_loss_grad(arch, x, train).grad, alpha_inner);
    r.mse.push_back(mse(arch, x, held_out));
  }
  return r;
}

}  // namespace cadam::meta
