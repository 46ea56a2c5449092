// cadam_bench: experiments, ablations, MAML, J*, data generation and
// diagnostics from the command line.
//
//     cadam_bench run --config exp.cfg --seed 1,2,3 --out-dir out/
//     cadam_bench ablate --config exp.cfg --axis batch --values 1,4,16 --seed 1 --out-dir out/
//     cadam_bench maml --seed 1 --out-dir out/ --iterations 20000
//     cadam_bench diagnose lemma3 --a 0.5 --b 1 --C-eta 2
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cadam/bench/config.hpp"
#include "cadam/bench/experiment.hpp"
#include "cadam/bench/io.hpp"
#include "cadam/bench/maml_pipeline.hpp"
#include "cadam/diagnostics.hpp"

namespace {

using namespace cadam;
using namespace cadam::bench;

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

// Flags shared by the config-driven commands. Each one overrides the file.
struct ExperimentFlags {
  std::string config;
  std::string problem;
  std::vector<std::string> optimizers;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  std::size_t T = 0;
  std::size_t budget = 0;
  std::string output_rule;
  std::string checkpoints;
  std::vector<double> box;
  bool wallclock = false;
  std::string data;
  std::string regime;
  std::uint64_t data_seed = 0;
  bool data_seed_set = false;

  void add(CLI::App* app, bool needs_output) {
    app->add_option("--config", config, "Experiment config file");
    app->add_option("--problem", problem, "portfolio | quad | maml-case1 | maml-case2 (without --config)");
    app->add_option("--optimizer", optimizers, "Optimizer arms with default settings (without --config)")
        ->delimiter(',');
    auto* seed = app->add_option("--seed", seeds, "Run seeds, comma separated")->delimiter(',');
    auto* out = app->add_option("--out-dir", out_dir, "Output directory");
    if (needs_output) {
      seed->required();
      out->required();
    }
    app->add_option("--T", T, "Iterations per run");
    app->add_option("--budget", budget, "Sample budget per run");
    app->add_option("--output-rule", output_rule, "last-iterate | uniform-iterate");
    app->add_option("--checkpoints", checkpoints, "every | geometric | t1,t2,...");
    app->add_option("--box", box, "Clip iterates to [lo, hi]")->delimiter(',')->expected(2);
    app->add_flag("--wallclock", wallclock, "Record wallclock_ns in traces");
    app->add_option("--data", data, "Returns CSV (portfolio)");
    app->add_option("--regime", regime, "large | medium | small (synthetic portfolio)");
    app->add_option("--data-seed", data_seed, "Seed of the problem instance")->each([this](const std::string&) {
      data_seed_set = true;
    });
  }

  ExperimentConfig load() const {
    std::string text;
    std::string origin = "flags";
    if (!config.empty()) {
      if (!problem.empty() || !optimizers.empty()) throw InvalidConfig("--problem/--optimizer conflict with --config");
      std::ifstream in(config, std::ios::binary);
      if (!in) throw InvalidConfig("cannot open config " + config);
      text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      origin = config;
    } else {
      if (problem.empty()) throw InvalidConfig("need --config or --problem");
      text = "problem = " + problem + "\n";
      for (const auto& o : optimizers.empty() ? std::vector<std::string>{"cadam"} : optimizers) {
        text += "[" + o + "]\n";
      }
    }
    ExperimentConfig cfg = parse_experiment_config(text, origin);
    if (!seeds.empty()) cfg.seeds = seeds;
    if (T > 0) cfg.T = T;
    if (budget > 0) cfg.sample_budget = budget;
    if (!output_rule.empty()) cfg.output_rule = parse_output_rule(output_rule);
    if (!checkpoints.empty()) cfg.checkpoints = parse_checkpoints(checkpoints);
    if (box.size() == 2) cfg.box = Box{box[0], box[1]};
    if (wallclock) cfg.record_wallclock = true;
    if (!data.empty()) cfg.problem.data_path = data;
    if (!regime.empty()) cfg.problem.regime = parse_regime(regime);
    if (data_seed_set) cfg.problem.data_seed = data_seed;
    cfg.validate();
    return cfg;
  }
};

void print_summary(const ExperimentConfig& cfg, const ExperimentResult& r) {
  if (r.jstar) std::printf("J* = %s\n", format_double(*r.jstar).c_str());
  for (const auto& opt : cfg.optimizers) {
    std::vector<double> finals;
    for (const RunRecord* rec : r.of(opt.label)) finals.push_back(rec->result.trace.rows.back().J_exact);
    const double med = median(finals);
    if (r.jstar) {
      std::printf("%-16s median final J = %s  gap = %s\n", opt.label.c_str(), format_double(med).c_str(),
                  format_double(med - *r.jstar).c_str());
    } else {
      std::printf("%-16s median final J = %s\n", opt.label.c_str(), format_double(med).c_str());
    }
  }
}

int cmd_run(const ExperimentFlags& f) {
  const ExperimentConfig cfg = f.load();
  const ExperimentResult r = run_experiment(cfg, fs::path(f.out_dir));
  print_summary(cfg, r);
  return kOk;
}

int cmd_ablate(const ExperimentFlags& f, const std::string& axis, const std::vector<double>& values) {
  const ExperimentConfig base = f.load();
  const auto arms = ablation_grid(base, parse_ablation_axis(axis), values);
  JStarCache cache;
  std::string summary = "arm,optimizer,median_final_J,median_gap\n";
  for (const auto& arm : arms) {
    const ExperimentResult r = run_experiment(arm.config, fs::path(f.out_dir) / arm.name, &cache);
    for (const auto& opt : arm.config.optimizers) {
      std::vector<double> finals;
      for (const RunRecord* rec : r.of(opt.label)) finals.push_back(rec->result.trace.rows.back().J_exact);
      const double med = median(finals);
      const std::string gap = r.jstar ? format_double(median(final_gaps(r, opt.label))) : "nan";
      summary += arm.name + ',' + opt.label + ',' + format_double(med) + ',' + gap + '\n';
      std::printf("%-10s %-16s median final J = %s  gap = %s\n", arm.name.c_str(), opt.label.c_str(),
                  format_double(med).c_str(), gap.c_str());
    }
  }
  std::ofstream(fs::path(f.out_dir) / "ablation.csv", std::ios::binary) << summary;
  return kOk;
}

struct MamlFlags {
  std::string config;
  std::uint64_t seed = 1;
  std::string out_dir;
  std::size_t iterations = 20000;
  int case_id = 2;
  std::size_t tasks = 8;
  std::size_t test_tasks = 100;
  std::size_t finetune_steps = 10;
  std::uint64_t data_seed = 0;
};

int cmd_maml(const MamlFlags& f) {
  MamlPipelineConfig cfg;
  if (!f.config.empty()) {
    // Problem and optimizer settings from a config; its T is ignored.
    ExperimentConfig ec = load_experiment_config(f.config);
    if (ec.optimizers.size() != 1) throw InvalidConfig("maml config needs exactly one optimizer section");
    cfg.problem = ec.problem;
    cfg.optimizer = ec.optimizers.front();
    cfg.output_rule = ec.output_rule;
    cfg.checkpoints = ec.checkpoints;
  } else {
    if (f.case_id != 1 && f.case_id != 2) throw InvalidConfig("--case must be 1 or 2");
    cfg.problem.kind = f.case_id == 1 ? ProblemKind::kMamlCase1 : ProblemKind::kMamlCase2;
    cfg.problem.tasks = f.tasks;
    cfg.problem.data_seed = f.data_seed;
    cfg.optimizer.cadam = default_cadam_schedule(cfg.problem.kind);
  }
  cfg.iterations = f.iterations;
  cfg.seed = f.seed;
  cfg.test_tasks = f.test_tasks;
  cfg.finetune_steps = f.finetune_steps;
  const MamlPipelineResult r = maml_pipeline(cfg);
  write_maml_outputs(r, f.out_dir);
  for (std::size_t k = 0; k <= f.finetune_steps; ++k) {
    std::printf("steps=%-3zu meta MSE = %.6g  random-init MSE = %.6g\n", k, r.mean_meta_mse(k), r.mean_random_mse(k));
  }
  return kOk;
}

int cmd_jstar(const ExperimentFlags& f) {
  const ExperimentConfig cfg = f.load();
  const auto instance = build_problem(cfg.problem);
  if (!instance->has_optimum()) throw InvalidConfig("problem has no deterministic objective to minimize");
  const CompositionalProblem& p = instance->evaluator();
  const JStar js = compute_jstar(p, Vector::Zero(p.p()), cfg.jstar_budget);
  std::printf("J* = %s\niterations = %zu\ngrad_norm = %s\nproblem_hash = %s\n", format_double(js.J).c_str(),
              js.iterations, format_double(js.grad_norm).c_str(), hex64(p.content_hash()).c_str());
  return kOk;
}

int cmd_gen_data(const std::string& regime, std::uint64_t seed, std::size_t m, std::size_t n, const std::string& out) {
  const PortfolioData data =
      synthetic_returns(static_cast<Index>(m), static_cast<Index>(n), seed, parse_regime(regime));
  write_returns_csv(out, data);
  std::printf("wrote %lld x %lld returns to %s\n", static_cast<long long>(data.R.rows()),
              static_cast<long long>(data.R.cols()), out.c_str());
  return kOk;
}

// --- diagnose -------------------------------------------------------------

int cmd_lemma2(const ExperimentFlags& f, std::size_t T, std::size_t points, const std::string& out) {
  const ExperimentConfig cfg = f.load();
  const auto instance = build_problem(cfg.problem);
  const CompositionalProblem& p = instance->evaluator();
  ScheduleConfig sched = default_cadam_schedule(cfg.problem.kind);
  for (const auto& o : cfg.optimizers)
    if (o.kind == OptimizerKind::kCAdam) sched = o.cadam;

  const SeedTree seeds(cfg.seeds.front());
  const Vector x1 = instance->initial_point(seeds);
  Stream s = seeds.stream(0, StreamKind::kDiagnostics);
  const DomainSampler around = [&](Stream& st) -> Vector { return x1 + cadam::detail::random_offset(x1.size(), st, 0.0, 1.0); };
  const ProblemConstants k = estimate_constants(p, around, points, s);
  auto g1 = p.exact_inner(x1);
  if (!g1) throw InvalidConfig("lemma2 needs a problem with exact_inner");
  const auto states = lemma2_bound_recursions(sched, k, g1->squaredNorm(), T);

  std::string csv = "t,D,F_sq,E_sq,envelope\n";
  for (const auto& st : states) {
    csv += std::to_string(st.t) + ',' + format_double(st.D) + ',' + format_double(st.F_sq) + ',' +
           format_double(st.E_sq) + ',' + format_double(st.envelope) + '\n';
  }
  if (out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    std::ofstream(out, std::ios::binary) << csv;
  }
  const auto burn = envelope_burn_in(states);
  std::fprintf(stderr, "M_f=%.4g M_g=%.4g L_g=%.4g sigma3^2=%.4g; envelope burn-in t = %s\n", k.M_f, k.M_g, k.L_g,
               k.sigma3_sq, burn ? std::to_string(*burn).c_str() : "none");
  return kOk;
}

int cmd_lemma3(const Lemma3Config& c, std::size_t T) {
  const Lemma3Result r = lemma3_recursion(c, T);
  std::printf("C_A = %s\nholds = %s\ninduction_step_applies = %s\n", format_double(r.C_A).c_str(),
              r.holds ? "true" : "false", c.induction_step_applies(T) ? "true" : "false");
  if (r.first_violation) std::printf("first_violation_t = %zu\n", *r.first_violation);
  return kOk;
}

int cmd_theta(const std::vector<double>& betas, std::size_t t) {
  const auto theta = theta_coefficients(betas, t);
  double sum = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::printf("theta[%zu] = %s\n", i, format_double(theta[i]).c_str());
    sum += theta[i];
  }
  std::printf("sum = %s\n", format_double(sum).c_str());
  return kOk;
}

int cmd_constants(const ExperimentFlags& f, std::size_t points, double radius) {
  const ExperimentConfig cfg = f.load();
  const auto instance = build_problem(cfg.problem);
  const CompositionalProblem& p = instance->evaluator();
  const SeedTree seeds(cfg.seeds.front());
  const Vector x1 = instance->initial_point(seeds);
  Stream s = seeds.stream(0, StreamKind::kDiagnostics);
  const DomainSampler around = [&](Stream& st) -> Vector {
    return x1 + cadam::detail::random_offset(x1.size(), st, 0.0, radius);
  };
  const ProblemConstants k = estimate_constants(p, around, points, s);
  std::printf("B_f = %s\nM_f = %s\nM_g = %s\nL_f = %s\nL_g = %s\nsigma1_sq = %s\nsigma2_sq = %s\nsigma3_sq = %s\n"
              "L = %s\n",
              format_double(k.B_f).c_str(), format_double(k.M_f).c_str(), format_double(k.M_g).c_str(),
              format_double(k.L_f).c_str(), format_double(k.L_g).c_str(), format_double(k.sigma1_sq).c_str(),
              format_double(k.sigma2_sq).c_str(), format_double(k.sigma3_sq).c_str(),
              format_double(k.smoothness()).c_str());
  return kOk;
}

int cmd_decay(const std::vector<std::string>& files, const std::vector<std::size_t>& checkpoints) {
  std::vector<RunTrace> traces;
  for (const auto& path : files) traces.push_back(read_trace_csv(path));
  const auto errs = mean_tracking_error(traces, checkpoints);
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    std::printf("t = %zu  mean tracking error = %s\n", checkpoints[i], format_double(errs[i]).c_str());
  }
  std::printf("slope = %s\n", format_double(decay_exponent_fit(traces, checkpoints)).c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"C-ADAM benchmark harness"};
  app.require_subcommand(1);

  ExperimentFlags run_flags;
  auto* run = app.add_subcommand("run", "Run every optimizer arm over every seed");
  run_flags.add(run, true);

  ExperimentFlags ablate_flags;
  std::string axis;
  std::vector<double> values;
  auto* ablate = app.add_subcommand("ablate", "Vary K1=K2=K3=K or C_alpha=C_beta=C of the C-ADAM arms");
  ablate_flags.add(ablate, true);
  ablate->add_option("--axis", axis, "batch | step")->required();
  ablate->add_option("--values", values, "Grid values")->delimiter(',')->required();

  MamlFlags maml_flags;
  auto* maml = app.add_subcommand("maml", "Meta-train on sine tasks and evaluate fine-tuning on test tasks");
  maml->add_option("--config", maml_flags.config, "Config with a maml problem and one optimizer section");
  maml->add_option("--seed", maml_flags.seed, "Run seed")->required();
  maml->add_option("--out-dir", maml_flags.out_dir, "Output directory")->required();
  maml->add_option("--iterations", maml_flags.iterations, "Training iterations");
  maml->add_option("--case", maml_flags.case_id, "1 (single task) or 2 (task batches)");
  maml->add_option("--tasks", maml_flags.tasks, "Tasks per meta-batch (case 2)");
  maml->add_option("--test-tasks", maml_flags.test_tasks, "Test tasks");
  maml->add_option("--finetune-steps", maml_flags.finetune_steps, "SGD steps at test time");
  maml->add_option("--data-seed", maml_flags.data_seed, "Seed of the frozen evaluation tasks");

  ExperimentFlags jstar_flags;
  auto* jstar = app.add_subcommand("jstar", "Minimize the exact objective by line-searched gradient descent");
  jstar_flags.add(jstar, false);

  std::string gen_regime = "medium", gen_out;
  std::uint64_t gen_seed = 0;
  std::size_t gen_m = 0, gen_n = 0;
  auto* gen = app.add_subcommand("gen-data", "Write synthetic returns as CSV");
  gen->add_option("--regime", gen_regime, "large | medium | small");
  gen->add_option("--seed", gen_seed, "Data seed");
  gen->add_option("--m", gen_m, "Time points (0: regime default)");
  gen->add_option("--n", gen_n, "Assets (0: regime default)");
  gen->add_option("--out", gen_out, "Output CSV")->required();

  auto* diagnose = app.add_subcommand("diagnose", "Numeric checks of the analysis");
  diagnose->require_subcommand(1);

  ExperimentFlags l2_flags;
  std::size_t l2_T = 1000, l2_points = 16;
  std::string l2_out;
  auto* l2 = diagnose->add_subcommand("lemma2", "Iterate the tracking-error bound recursions");
  l2_flags.add(l2, false);
  l2->add_option("--iterations", l2_T, "Horizon");
  l2->add_option("--points", l2_points, "Points for the constant estimates");
  l2->add_option("--out", l2_out, "CSV output (default stdout)");

  Lemma3Config l3;
  std::size_t l3_T = 10000;
  auto* lemma3 = diagnose->add_subcommand("lemma3", "Iterate the power-law recursion and compare with its bound");
  lemma3->add_option("--a", l3.a);
  lemma3->add_option("--b", l3.b);
  lemma3->add_option("--C-eta", l3.C_eta);
  lemma3->add_option("--C-zeta", l3.C_zeta);
  lemma3->add_option("--C1", l3.C_1);
  lemma3->add_option("--C2", l3.C_2);
  lemma3->add_option("--A1", l3.A_1);
  lemma3->add_option("--iterations", l3_T);

  std::vector<double> betas;
  std::size_t theta_t = 0;
  auto* theta = diagnose->add_subcommand("theta", "Averaging weights of a beta sequence");
  theta->add_option("--betas", betas, "beta_0 (must be 1), beta_1, ...")->delimiter(',')->required();
  theta->add_option("--t", theta_t, "Last index t (default: all betas)");

  ExperimentFlags k_flags;
  std::size_t k_points = 16;
  double k_radius = 1.0;
  auto* constants = diagnose->add_subcommand("constants", "Estimate the problem constants around x_1");
  k_flags.add(constants, false);
  constants->add_option("--points", k_points);
  constants->add_option("--radius", k_radius);

  std::vector<std::string> decay_files;
  std::vector<std::size_t> decay_ts{10, 100, 1000};
  auto* decay = diagnose->add_subcommand("decay", "Log-log slope of the seed-mean tracking error");
  decay->add_option("traces", decay_files, "Trace CSVs")->required();
  decay->add_option("--checkpoints", decay_ts)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*ablate) return cmd_ablate(ablate_flags, axis, values);
    if (*maml) return cmd_maml(maml_flags);
    if (*jstar) return cmd_jstar(jstar_flags);
    if (*gen) return cmd_gen_data(gen_regime, gen_seed, gen_m, gen_n, gen_out);
    if (*l2) return cmd_lemma2(l2_flags, l2_T, l2_points, l2_out);
    if (*lemma3) return cmd_lemma3(l3, l3_T);
    if (*theta) return cmd_theta(betas, theta_t == 0 && !betas.empty() ? betas.size() - 1 : theta_t);
    if (*constants) return cmd_constants(k_flags, k_points, k_radius);
    if (*decay) return cmd_decay(decay_files, decay_ts);
  } catch (const NumericFailure& e) {
    std::fprintf(stderr, "numeric failure at t=%zu: %s\n", e.iteration(), e.what());
    return kNumeric;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const InvalidConfig& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const InvalidParams& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const HypothesisViolation& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DimensionMismatch& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOther;
}
