#pragma once

// Meta-train on sine tasks, then fine-tune on fresh test tasks and compare
// against fine-tuning the untrained initialization.

#include <string>
#include <vector>

#include "cadam/bench/experiment.hpp"
#include "cadam/bench/io.hpp"
#include "cadam/meta/maml.hpp"

namespace cadam::bench {

struct MamlPipelineConfig {
  ProblemSpec problem = [] {
    ProblemSpec p;
    p.kind = ProblemKind::kMamlCase2;
    return p;
  }();
  OptimizerSpec optimizer = [] {
    OptimizerSpec o;
    o.kind = OptimizerKind::kCAdam;
    o.label = "cadam";
    o.cadam = default_cadam_schedule(ProblemKind::kMamlCase2);
    return o;
  }();
  std::size_t iterations = 20000;
  std::uint64_t seed = 1;
  std::size_t test_tasks = 100;
  std::size_t finetune_steps = 10;
  double finetune_alpha = 0.01;
  std::size_t test_points = 100;  // held-out points per test task
  OutputRule output_rule = OutputRule::kLastIterate;
  Checkpoints checkpoints = Checkpoints::geometric();
};

struct MamlTestTask {
  meta::SineTask task;
  meta::FineTuneResult meta;    // starting from the meta-trained parameters
  meta::FineTuneResult random;  // starting from the untrained initialization
};

struct MamlPipelineResult {
  meta::MlpArchitecture arch;
  Vector x_init;
  Vector x_meta;
  std::optional<RunResult> run;  // empty for 0 iterations
  std::vector<MamlTestTask> tests;

  double mean_meta_mse(std::size_t k) const {
    double acc = 0.0;
    for (const auto& t : tests) acc += t.meta.mse.at(k);
    return acc / static_cast<double>(tests.size());
  }
  double mean_random_mse(std::size_t k) const {
    double acc = 0.0;
    for (const auto& t : tests) acc += t.random.mse.at(k);
    return acc / static_cast<double>(tests.size());
  }
};

/// Test tasks and their data come from a subtree that training never touches.
inline constexpr std::uint64_t kTestTaskSubtree = 0x7e57;

inline MamlPipelineResult maml_pipeline(const MamlPipelineConfig& cfg) {
  if (cfg.problem.kind != ProblemKind::kMamlCase1 && cfg.problem.kind != ProblemKind::kMamlCase2) {
    throw InvalidConfig("maml_pipeline needs a maml-case1 or maml-case2 problem");
  }
  if (cfg.test_tasks < 1) throw InvalidConfig("maml_pipeline needs at least one test task");
  const SeedTree seeds(cfg.seed);
  ProblemSpec spec = cfg.problem;
  if (spec.kind == ProblemKind::kMamlCase1) spec.tasks = 1;
  const auto instance = build_problem(spec);

  MamlPipelineResult r;
  r.arch = spec.architecture();
  r.x_init = instance->initial_point(seeds);
  r.x_meta = r.x_init;
  if (cfg.iterations > 0) {
    RunOptions options;
    options.output_rule = cfg.output_rule;
    options.checkpoints = cfg.checkpoints;
    r.run = run_optimizer(cfg.optimizer, instance->problem_at(seeds), instance->evaluator(), r.x_init,
                          cfg.iterations, seeds, options);
    r.x_meta = r.run->x_out;
  }

  const SeedTree test_seeds = seeds.child(kTestTaskSubtree);
  const Index M = static_cast<Index>(spec.M);
  for (std::size_t i = 0; i < cfg.test_tasks; ++i) {
    Stream ts = test_seeds.stream(i, StreamKind::kTasks);
    MamlTestTask t;
    t.task = meta::SineTask::sample(ts);
    // Both starting points see the same fine-tuning batch and held-out batch.
    Stream data = test_seeds.stream(i, StreamKind::kEval);
    Stream data_copy = data;
    t.meta = meta::fine_tune_eval(r.arch, r.x_meta, t.task, cfg.finetune_steps, cfg.finetune_alpha, M, data,
                                  static_cast<Index>(cfg.test_points));
    t.random = meta::fine_tune_eval(r.arch, r.x_init, t.task, cfg.finetune_steps, cfg.finetune_alpha, M, data_copy,
                                    static_cast<Index>(cfg.test_points));
    r.tests.push_back(std::move(t));
  }
  return r;
}

/// task,amplitude,phase,model,steps,mse with one row per (task, model, step count).
inline std::string maml_report_csv(const MamlPipelineResult& r) {
  std::string s = "task,amplitude,phase,model,steps,mse\n";
  for (std::size_t i = 0; i < r.tests.size(); ++i) {
    const auto& t = r.tests[i];
    auto rows = [&](const char* model, const meta::FineTuneResult& f) {
      for (std::size_t k = 0; k < f.mse.size(); ++k) {
        s += std::to_string(i) + ',' + format_double(t.task.amplitude) + ',' + format_double(t.task.phase) + ',' +
             model + ',' + std::to_string(k) + ',' + format_double(f.mse[k]) + '\n';
      }
    };
    rows("meta", t.meta);
    rows("random", t.random);
  }
  return s;
}

/// checkpoint.bin, report.csv, trace.csv (if trained) and manifest.txt.
inline void write_maml_outputs(const MamlPipelineResult& r, const fs::path& dir) {
  OutputSet out(dir);
  try {
    out.write("checkpoint.bin", encode_checkpoint(r.arch, r.x_meta));
    out.write("report.csv", maml_report_csv(r));
    if (r.run) out.write("trace.csv", trace_csv(r.run->trace));
    const std::size_t k = r.tests.front().meta.mse.size() - 1;
    out.write_manifest({{"fine_tune_steps", std::to_string(k)},
                        {"mean_meta_mse", format_double(r.mean_meta_mse(k))},
                        {"mean_random_mse", format_double(r.mean_random_mse(k))}});
  } catch (...) {
    out.remove_all();
    throw;
  }
}

}  // namespace cadam::bench
