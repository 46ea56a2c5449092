#pragma once

// Seeded experiment execution: problem construction from a config, one run
// per (optimizer, seed), trace CSVs, manifest, optimality reference J*.

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cadam/bench/config.hpp"
#include "cadam/bench/io.hpp"
#include "cadam/meta/maml.hpp"
#include "cadam/problems/portfolio.hpp"
#include "cadam/problems/quad_compose.hpp"
#include "cadam/run.hpp"

namespace cadam::bench {

// ---------------------------------------------------------------------------
// J*

struct JStar {
  double J = 0.0;
  Vector x;
  std::size_t iterations = 0;
  double grad_norm = 0.0;
};

/// Full-gradient descent with Armijo backtracking on the exact objective.
/// Stops at ||grad J|| <= tol or after `budget` iterations.
inline JStar compute_jstar(const CompositionalProblem& problem, const Vector& x0, std::size_t budget,
                           double tol = 1e-10) {
  expect_dim(x0.size(), problem.p(), "compute_jstar");
  if (!problem.exact_objective(x0) || !problem.exact_gradient(x0)) {
    throw InvalidConfig("compute_jstar needs exact objective and gradient");
  }
  JStar r;
  r.x = x0;
  r.J = *problem.exact_objective(r.x);
  Vector g = *problem.exact_gradient(r.x);
  double step = 1.0;
  while (r.iterations < budget) {
    const double gg = g.squaredNorm();
    if (std::sqrt(gg) <= tol) break;
    bool moved = false;
    // Stop once a step can no longer change x in floating point.
    const double floor = 1e-16 * (1.0 + r.x.norm()) / std::sqrt(gg);
    while (step > floor) {
      const Vector cand = r.x - step * g;
      const double Jc = *problem.exact_objective(cand);
      if (Jc <= r.J - 1e-4 * step * gg) {
        r.x = cand;
        r.J = Jc;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    ++r.iterations;
    if (!moved) break;
    g = *problem.exact_gradient(r.x);
    step *= 2.0;
  }
  r.grad_norm = g.norm();
  return r;
}

/// J* per problem content hash. Problems with hash 0 are never cached.
class JStarCache {
 public:
  double get(const CompositionalProblem& problem, const Vector& x0, std::size_t budget) {
    const std::uint64_t h = problem.content_hash();
    if (h != 0) {
      auto it = cache_.find(h);
      if (it != cache_.end()) return it->second;
    }
    const double J = compute_jstar(problem, x0, budget).J;
    if (h != 0) cache_[h] = J;
    ++computed_;
    return J;
  }

  std::size_t computed() const { return computed_; }

 private:
  std::map<std::uint64_t, double> cache_;
  std::size_t computed_ = 0;
};

// ---------------------------------------------------------------------------
// Problem instances.

/// A configured problem: a fixed evaluator for metrics plus, per run, the
/// problem each step samples from and the starting point.
class ProblemInstance {
 public:
  virtual ~ProblemInstance() = default;
  virtual const CompositionalProblem& evaluator() const = 0;
  virtual ProblemAt problem_at(const SeedTree& seeds) const = 0;
  virtual Vector initial_point(const SeedTree& seeds) const = 0;
  virtual bool has_optimum() const { return true; }
};

namespace detail {

class FixedInstance final : public ProblemInstance {
 public:
  explicit FixedInstance(std::unique_ptr<CompositionalProblem> p) : problem_(std::move(p)) {}
  const CompositionalProblem& evaluator() const override { return *problem_; }
  ProblemAt problem_at(const SeedTree&) const override { return cadam::detail::fixed(*problem_); }
  Vector initial_point(const SeedTree&) const override { return Vector::Zero(problem_->p()); }

 private:
  std::unique_ptr<CompositionalProblem> problem_;
};

class MamlInstance final : public ProblemInstance {
 public:
  explicit MamlInstance(const ProblemSpec& spec) : spec_(spec), arch_(spec.architecture()) {
    Stream task_stream = SeedTree(spec.data_seed).stream(0, StreamKind::kTasks);
    std::vector<meta::SineTask> tasks;
    for (std::size_t j = 0; j < spec.tasks; ++j) tasks.push_back(meta::SineTask::sample(task_stream));
    const Index M = static_cast<Index>(spec.M);
    // Inner step on M points as in training; the outer loss on eval_points.
    eval_ = std::make_unique<meta::MamlProblem>(arch_, tasks, spec.alpha_inner, M);
    Stream data = SeedTree(spec.data_seed).stream(0, StreamKind::kEval);
    eval_->freeze_from(data, static_cast<Index>(spec.eval_points));
    if (spec.kind == ProblemKind::kMamlCase1) {
      train_ = std::make_unique<meta::MamlProblem>(arch_, tasks, spec.alpha_inner, M);
    }
  }

  const CompositionalProblem& evaluator() const override { return *eval_; }

  ProblemAt problem_at(const SeedTree& seeds) const override {
    if (train_) return cadam::detail::fixed(*train_);
    // Fresh meta-batch of tasks at every iteration.
    struct Cache {
      std::size_t t = 0;
      std::unique_ptr<meta::MamlProblem> problem;
    };
    auto cache = std::make_shared<Cache>();
    return [cache, seeds, arch = arch_, spec = spec_](std::size_t t) -> const CompositionalProblem& {
      if (!cache->problem || cache->t != t) {
        Stream s = seeds.stream(t, StreamKind::kTasks);
        std::vector<meta::SineTask> tasks;
        for (std::size_t j = 0; j < spec.tasks; ++j) tasks.push_back(meta::SineTask::sample(s));
        cache->problem =
            std::make_unique<meta::MamlProblem>(arch, std::move(tasks), spec.alpha_inner, static_cast<Index>(spec.M));
        cache->t = t;
      }
      return *cache->problem;
    };
  }

  Vector initial_point(const SeedTree& seeds) const override {
    Stream s = seeds.stream(0, StreamKind::kInit);
    return meta::Mlp::init(arch_, s).params;
  }

  bool has_optimum() const override { return false; }

 private:
  ProblemSpec spec_;
  meta::MlpArchitecture arch_;
  std::unique_ptr<meta::MamlProblem> eval_;
  std::unique_ptr<meta::MamlProblem> train_;
};

}  // namespace detail

inline PortfolioData portfolio_data_for(const ProblemSpec& spec) {
  if (!spec.data_path.empty()) return load_returns_csv(spec.data_path);
  return synthetic_returns(static_cast<Index>(spec.m), static_cast<Index>(spec.n), spec.data_seed, spec.regime);
}

inline std::unique_ptr<ProblemInstance> build_problem(const ProblemSpec& spec) {
  switch (spec.kind) {
    case ProblemKind::kPortfolio:
      return std::make_unique<detail::FixedInstance>(std::make_unique<PortfolioProblem>(portfolio_data_for(spec)));
    case ProblemKind::kQuad:
      return std::make_unique<detail::FixedInstance>(std::make_unique<QuadComposeProblem>(
          random_quad_compose(static_cast<Index>(spec.p), static_cast<Index>(spec.q), spec.data_seed, spec.sigma)));
    case ProblemKind::kMamlCase1:
    case ProblemKind::kMamlCase2:
      return std::make_unique<detail::MamlInstance>(spec);
  }
  throw InvalidConfig("unknown problem kind");
}

// ---------------------------------------------------------------------------
// Runs.

inline RunOptions run_options(const ExperimentConfig& cfg) {
  RunOptions o;
  o.output_rule = cfg.output_rule;
  o.checkpoints = cfg.checkpoints;
  o.sample_budget = cfg.sample_budget;
  o.box = cfg.box;
  o.record_wallclock = cfg.record_wallclock;
  return o;
}

inline RunResult run_optimizer(const OptimizerSpec& opt, const ProblemAt& at, const CompositionalProblem& evaluator,
                               const Vector& x1, std::size_t T, const SeedTree& seeds, const RunOptions& options) {
  switch (opt.kind) {
    case OptimizerKind::kCAdam: return cadam_run(at, evaluator, x1, opt.cadam, T, seeds, options);
    case OptimizerKind::kScgd: return scgd_run(at, evaluator, x1, opt.baseline, T, seeds, options);
    case OptimizerKind::kAscpg: return ascpg_run(at, evaluator, x1, opt.baseline, T, seeds, options);
    case OptimizerKind::kAdam: return adam_run(at, evaluator, x1, opt.adam, T, seeds, options);
    case OptimizerKind::kSgd: return sgd_run(at, evaluator, x1, opt.sgd, T, seeds, options);
  }
  throw InvalidConfig("unknown optimizer kind");
}

inline std::string trace_file_name(const OptimizerSpec& opt, std::uint64_t seed) {
  return opt.label + "_seed" + std::to_string(seed) + ".csv";
}

struct RunRecord {
  std::string optimizer;
  std::uint64_t seed = 0;
  std::string file;
  RunResult result;
};

struct ExperimentResult {
  std::optional<double> jstar;
  std::vector<RunRecord> runs;

  /// Traces of one optimizer label, in seed order.
  std::vector<const RunRecord*> of(const std::string& label) const {
    std::vector<const RunRecord*> out;
    for (const auto& r : runs)
      if (r.optimizer == label) out.push_back(&r);
    return out;
  }
};

/// Executes every (optimizer, seed) pair. With an output directory, writes
/// one CSV per run plus manifest.txt; on any failure the files written so far
/// are removed and the error is rethrown.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::optional<fs::path>& out_dir = {},
                                       JStarCache* cache = nullptr) {
  cfg.validate();
  std::optional<OutputSet> out;
  if (out_dir) out.emplace(*out_dir);
  try {
    const auto instance = build_problem(cfg.problem);
    const CompositionalProblem& evaluator = instance->evaluator();

    ExperimentResult result;
    if (instance->has_optimum()) {
      JStarCache local;
      JStarCache& c = cache ? *cache : local;
      result.jstar = c.get(evaluator, Vector::Zero(evaluator.p()), cfg.jstar_budget);
    }

    const RunOptions options = run_options(cfg);
    for (const auto& opt : cfg.optimizers) {
      for (std::uint64_t seed : cfg.seeds) {
        const SeedTree seeds(seed);
        RunRecord rec{opt.label, seed, trace_file_name(opt, seed), {}};
        rec.result = run_optimizer(opt, instance->problem_at(seeds), evaluator, instance->initial_point(seeds), cfg.T,
                                   seeds, options);
        if (out) out->write(rec.file, trace_csv(rec.result.trace));
        result.runs.push_back(std::move(rec));
      }
    }
    if (out) {
      out->write_manifest({{"problem", to_string(cfg.problem.kind)},
                           {"problem_hash", hex64(evaluator.content_hash())},
                           {"jstar", result.jstar ? format_double(*result.jstar) : "nan"}});
    }
    return result;
  } catch (...) {
    if (out) out->remove_all();
    throw;
  }
}

// ---------------------------------------------------------------------------
// Ablations.

enum class AblationAxis { kBatch, kStep };

inline AblationAxis parse_ablation_axis(const std::string& s) {
  if (s == "batch") return AblationAxis::kBatch;
  if (s == "step") return AblationAxis::kStep;
  throw InvalidConfig("ablation axis must be 'batch' or 'step'");
}

struct AblationArm {
  std::string name;  // e.g. "K=16" or "C=0.01"
  ExperimentConfig config;
};

/// One config per value. Batch axis: K1 = K2 = K3 = K, constant in t. Step
/// axis: C_alpha = C_beta = C. Only the C-ADAM sections are varied.
inline std::vector<AblationArm> ablation_grid(const ExperimentConfig& base, AblationAxis axis,
                                              const std::vector<double>& values) {
  bool any = false;
  for (const auto& o : base.optimizers) any = any || o.kind == OptimizerKind::kCAdam;
  if (!any) throw InvalidConfig("ablation needs a [cadam] section");
  if (values.empty()) throw InvalidConfig("ablation needs at least one value");
  std::vector<AblationArm> arms;
  for (double v : values) {
    AblationArm arm{(axis == AblationAxis::kBatch ? "K=" : "C=") + format_double(v), base};
    for (auto& o : arm.config.optimizers) {
      if (o.kind != OptimizerKind::kCAdam) continue;
      if (axis == AblationAxis::kBatch) {
        if (v < 1 || std::floor(v) != v) throw InvalidConfig("batch ablation values must be positive integers");
        o.cadam = ScheduleConfig::constant_batches(o.cadam, v);
      } else {
        o.cadam.C_alpha = v;
        o.cadam.C_beta = v;
      }
      o.cadam.validate();
    }
    arms.push_back(std::move(arm));
  }
  return arms;
}

/// Final-checkpoint optimality gap of every run of one optimizer label.
inline std::vector<double> final_gaps(const ExperimentResult& r, const std::string& label) {
  if (!r.jstar) throw InvalidConfig("final_gaps needs J*");
  std::vector<double> out;
  for (const RunRecord* rec : r.of(label)) out.push_back(rec->result.trace.rows.back().J_exact - *r.jstar);
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidConfig("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace cadam::bench
