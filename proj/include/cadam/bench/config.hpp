#pragma once

// Experiment configuration. Text format: "key = value" lines, '#' comments,
// and one "[optimizer]" or "[optimizer label]" section per optimizer arm.
//
//     problem = portfolio
//     regime = medium
//     T = 20000
//     seeds = 1, 2, 3
//
//     [cadam]
//     C_alpha = 0.01
//
//     [scgd slow]
//     C_alpha = 0.001

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cadam/bench/io.hpp"
#include "cadam/meta/mlp.hpp"
#include "cadam/problems/portfolio.hpp"
#include "cadam/run.hpp"
#include "cadam/schedule.hpp"

namespace cadam::bench {

/// Raw sections of a config file, in file order.
struct KeyValueFile {
  struct Section {
    std::string name;  // "" for the top level
    std::string label;
    int line = 0;
    std::vector<std::pair<std::string, std::string>> entries;
    std::vector<int> lines;
  };
  std::vector<Section> sections;
};

inline KeyValueFile parse_key_value(const std::string& text, const std::string& origin = "config") {
  KeyValueFile f;
  f.sections.push_back({"", "", 0, {}, {}});
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw InvalidConfig(where() + "unterminated section header");
      std::istringstream hs(trim(line.substr(1, line.size() - 2)));
      KeyValueFile::Section s;
      s.line = lineno;
      hs >> s.name;
      std::getline(hs, s.label);
      s.label = trim(s.label);
      if (s.name.empty()) throw InvalidConfig(where() + "empty section name");
      f.sections.push_back(std::move(s));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidConfig(where() + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw InvalidConfig(where() + "empty key");
    auto& sec = f.sections.back();
    for (const auto& [k, v] : sec.entries)
      if (k == key) throw InvalidConfig(where() + "duplicate key '" + key + "'");
    sec.entries.emplace_back(key, value);
    sec.lines.push_back(lineno);
  }
  return f;
}

namespace detail {

/// Typed access to one section; remembers which keys were consumed so that
/// leftovers (typos) can be reported.
class SectionReader {
 public:
  SectionReader(const KeyValueFile::Section& s, std::string origin) : s_(s), origin_(std::move(origin)) {}

  std::optional<std::string> str(const std::string& key) {
    for (std::size_t i = 0; i < s_.entries.size(); ++i) {
      if (s_.entries[i].first == key) {
        used_.insert(key);
        return s_.entries[i].second;
      }
    }
    return std::nullopt;
  }

  std::optional<double> real(const std::string& key) {
    auto v = str(key);
    if (!v) return std::nullopt;
    auto d = parse_double(*v);
    if (!d) throw InvalidConfig(context(key) + "expected a number, got '" + *v + "'");
    return d;
  }

  std::optional<std::size_t> count(const std::string& key) {
    auto d = real(key);
    if (!d) return std::nullopt;
    if (*d < 0 || std::floor(*d) != *d) throw InvalidConfig(context(key) + "expected a nonnegative integer");
    return static_cast<std::size_t>(*d);
  }

  std::optional<std::vector<double>> reals(const std::string& key) {
    auto v = str(key);
    if (!v) return std::nullopt;
    std::vector<double> out;
    for (const auto& cell : split(*v, ',')) {
      auto d = parse_double(cell);
      if (!d) throw InvalidConfig(context(key) + "bad list element '" + trim(cell) + "'");
      out.push_back(*d);
    }
    return out;
  }

  void set(const std::string& key, double& target) {
    if (auto v = real(key)) target = *v;
  }
  void set(const std::string& key, std::size_t& target) {
    if (auto v = count(key)) target = *v;
  }

  void reject_unknown() const {
    for (std::size_t i = 0; i < s_.entries.size(); ++i) {
      if (!used_.count(s_.entries[i].first)) {
        throw InvalidConfig(origin_ + ":" + std::to_string(s_.lines[i]) + ": unknown key '" + s_.entries[i].first +
                            "'" + (s_.name.empty() ? std::string() : " in [" + s_.name + "]"));
      }
    }
  }

 private:
  std::string context(const std::string& key) const {
    for (std::size_t i = 0; i < s_.entries.size(); ++i)
      if (s_.entries[i].first == key) return origin_ + ":" + std::to_string(s_.lines[i]) + ": " + key + ": ";
    return origin_ + ": " + key + ": ";
  }

  const KeyValueFile::Section& s_;
  std::string origin_;
  std::set<std::string> used_;
};

}  // namespace detail

enum class ProblemKind { kPortfolio, kQuad, kMamlCase1, kMamlCase2 };

inline ProblemKind parse_problem_kind(const std::string& s) {
  if (s == "portfolio") return ProblemKind::kPortfolio;
  if (s == "quad") return ProblemKind::kQuad;
  if (s == "maml-case1") return ProblemKind::kMamlCase1;
  if (s == "maml-case2") return ProblemKind::kMamlCase2;
  throw InvalidConfig("unknown problem '" + s + "' (portfolio, quad, maml-case1, maml-case2)");
}

inline std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::kPortfolio: return "portfolio";
    case ProblemKind::kQuad: return "quad";
    case ProblemKind::kMamlCase1: return "maml-case1";
    case ProblemKind::kMamlCase2: return "maml-case2";
  }
  return "?";
}

struct ProblemSpec {
  ProblemKind kind = ProblemKind::kQuad;
  std::uint64_t data_seed = 0;

  // portfolio
  std::string data_path;  // empty: synthetic
  ReturnsRegime regime = ReturnsRegime::kMedium;
  std::size_t m = 0;  // 0: regime default
  std::size_t n = 0;

  // quad
  std::size_t p = 10;
  std::size_t q = 15;
  double sigma = 0.5;

  // maml
  std::size_t tasks = 8;
  std::size_t M = 10;
  double alpha_inner = 0.01;
  std::vector<Index> hidden{40, 40};
  meta::Activation activation = meta::Activation::kRelu;
  std::size_t eval_points = 100;  // points per task in the frozen evaluation problem

  meta::MlpArchitecture architecture() const {
    meta::MlpArchitecture arch;
    arch.sizes = {1};
    for (Index h : hidden) arch.sizes.push_back(h);
    arch.sizes.push_back(1);
    arch.hidden = activation;
    return arch;
  }
};

enum class OptimizerKind { kCAdam, kScgd, kAscpg, kAdam, kSgd };

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "cadam") return OptimizerKind::kCAdam;
  if (s == "scgd") return OptimizerKind::kScgd;
  if (s == "ascpg") return OptimizerKind::kAscpg;
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw InvalidConfig("unknown optimizer '" + s + "' (cadam, scgd, ascpg, adam, sgd)");
}

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kCAdam: return "cadam";
    case OptimizerKind::kScgd: return "scgd";
    case OptimizerKind::kAscpg: return "ascpg";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kSgd: return "sgd";
  }
  return "?";
}

/// C-ADAM constants used unless a config overrides them.
inline ScheduleConfig default_cadam_schedule(ProblemKind kind) {
  ScheduleConfig cfg;
  switch (kind) {
    case ProblemKind::kPortfolio:
      return ScheduleConfig::constant_batches(cfg, 1.0);
    case ProblemKind::kQuad:
      return cfg;
    case ProblemKind::kMamlCase1:
    case ProblemKind::kMamlCase2:
      cfg.C_alpha = 0.001;
      cfg.C_beta = 0.99;
      return ScheduleConfig::constant_batches(cfg, 10.0);
  }
  return cfg;
}

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::kCAdam;
  std::string label;  // output file stem
  ScheduleConfig cadam;
  BaselineSchedule baseline;
  AdamConfig adam;
  SgdConfig sgd;
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<OptimizerSpec> optimizers;
  std::size_t T = 1000;
  std::vector<std::uint64_t> seeds{1};
  OutputRule output_rule = OutputRule::kUniformIterate;
  Checkpoints checkpoints = Checkpoints::geometric();
  std::optional<std::size_t> sample_budget;
  std::optional<Box> box;
  bool record_wallclock = false;
  std::size_t jstar_budget = 100000;

  void validate() const {
    if (optimizers.empty()) throw InvalidConfig("config needs at least one optimizer section");
    if (seeds.empty()) throw InvalidConfig("config needs at least one seed");
    if (T < 1) throw InvalidConfig("T must be >= 1");
    std::set<std::string> labels;
    for (const auto& o : optimizers) {
      if (!labels.insert(o.label).second) throw InvalidConfig("duplicate optimizer label '" + o.label + "'");
      if (o.kind == OptimizerKind::kCAdam) o.cadam.validate();
      if (o.kind == OptimizerKind::kScgd || o.kind == OptimizerKind::kAscpg) o.baseline.validate();
    }
    if (box && !(box->lo < box->hi)) throw InvalidConfig("box needs lo < hi");
  }
};

inline Checkpoints parse_checkpoints(const std::string& s) {
  const std::string v = trim(s);
  if (v == "every") return Checkpoints::every();
  if (v == "geometric") return Checkpoints::geometric();
  std::vector<std::size_t> ts;
  for (const auto& cell : split(v, ',')) {
    auto d = parse_double(cell);
    if (!d || *d < 1 || std::floor(*d) != *d) throw InvalidConfig("checkpoints: bad entry '" + trim(cell) + "'");
    ts.push_back(static_cast<std::size_t>(*d));
  }
  if (ts.empty()) throw InvalidConfig("checkpoints: empty list");
  return Checkpoints::at(std::move(ts));
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& cell : split(s, ',')) {
    const std::string c = trim(cell);
    if (c.empty() || c.find_first_not_of("0123456789") != std::string::npos) {
      throw InvalidConfig("seeds: bad entry '" + c + "'");
    }
    out.push_back(std::stoull(c));
  }
  if (out.empty()) throw InvalidConfig("seeds: empty list");
  return out;
}

namespace detail {

inline void read_problem(SectionReader& r, ProblemSpec& p) {
  auto kind = r.str("problem");
  if (!kind) throw InvalidConfig("config is missing 'problem'");
  p.kind = parse_problem_kind(*kind);
  if (auto s = r.count("data_seed")) p.data_seed = *s;
  switch (p.kind) {
    case ProblemKind::kPortfolio:
      if (auto v = r.str("data")) p.data_path = *v;
      if (auto v = r.str("regime")) p.regime = parse_regime(*v);
      r.set("m", p.m);
      r.set("n", p.n);
      break;
    case ProblemKind::kQuad:
      r.set("p", p.p);
      r.set("q", p.q);
      r.set("sigma", p.sigma);
      if (p.p < 1 || p.q < p.p) throw InvalidConfig("quad needs 1 <= p <= q");
      if (p.sigma < 0) throw InvalidConfig("quad sigma must be >= 0");
      break;
    case ProblemKind::kMamlCase1:
    case ProblemKind::kMamlCase2:
      r.set("tasks", p.tasks);
      r.set("M", p.M);
      r.set("alpha_inner", p.alpha_inner);
      r.set("eval_points", p.eval_points);
      if (auto h = r.reals("hidden")) {
        p.hidden.clear();
        for (double v : *h) {
          if (v < 1 || std::floor(v) != v) throw InvalidConfig("hidden: layer sizes must be positive integers");
          p.hidden.push_back(static_cast<Index>(v));
        }
      }
      if (auto a = r.str("activation")) {
        if (*a == "relu") p.activation = meta::Activation::kRelu;
        else if (*a == "tanh") p.activation = meta::Activation::kTanh;
        else throw InvalidConfig("activation must be relu or tanh");
      }
      if (p.kind == ProblemKind::kMamlCase1) p.tasks = 1;
      if (p.tasks < 1 || p.M < 1) throw InvalidConfig("maml needs tasks >= 1 and M >= 1");
      break;
  }
}

inline void read_optimizer(SectionReader& r, OptimizerSpec& o) {
  switch (o.kind) {
    case OptimizerKind::kCAdam: {
      ScheduleConfig& c = o.cadam;
      if (auto K = r.real("K")) c = ScheduleConfig::constant_batches(c, *K);
      r.set("C_alpha", c.C_alpha);
      r.set("C_beta", c.C_beta);
      r.set("C_1", c.C_1);
      r.set("C_2", c.C_2);
      r.set("C_3", c.C_3);
      r.set("C_gamma", c.C_gamma);
      r.set("mu", c.mu);
      r.set("epsilon", c.epsilon);
      r.set("a", c.a);
      r.set("b", c.b);
      r.set("c", c.c);
      r.set("e", c.e);
      break;
    }
    case OptimizerKind::kScgd:
    case OptimizerKind::kAscpg:
      r.set("C_alpha", o.baseline.C_alpha);
      r.set("C_beta", o.baseline.C_beta);
      r.set("alpha_exponent", o.baseline.alpha_exponent);
      r.set("beta_exponent", o.baseline.beta_exponent);
      r.set("K", o.baseline.K);
      break;
    case OptimizerKind::kAdam:
      r.set("alpha", o.adam.alpha);
      r.set("beta1", o.adam.beta1);
      r.set("beta2", o.adam.beta2);
      r.set("epsilon", o.adam.epsilon);
      r.set("K", o.adam.K);
      break;
    case OptimizerKind::kSgd:
      r.set("alpha", o.sgd.alpha);
      r.set("K", o.sgd.K);
      break;
  }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin = "config") {
  const KeyValueFile f = parse_key_value(text, origin);
  ExperimentConfig cfg;
  {
    detail::SectionReader r(f.sections.front(), origin);
    detail::read_problem(r, cfg.problem);
    r.set("T", cfg.T);
    if (auto v = r.str("seeds")) cfg.seeds = parse_seeds(*v);
    if (auto v = r.str("output_rule")) cfg.output_rule = parse_output_rule(*v);
    if (auto v = r.str("checkpoints")) cfg.checkpoints = parse_checkpoints(*v);
    if (auto v = r.count("budget")) cfg.sample_budget = *v;
    if (auto v = r.reals("box")) {
      if (v->size() != 2) throw InvalidConfig("box expects 'lo, hi'");
      cfg.box = Box{(*v)[0], (*v)[1]};
    }
    if (auto v = r.str("wallclock")) {
      if (*v != "true" && *v != "false") throw InvalidConfig("wallclock must be true or false");
      cfg.record_wallclock = *v == "true";
    }
    r.set("jstar_budget", cfg.jstar_budget);
    r.reject_unknown();
  }
  for (std::size_t i = 1; i < f.sections.size(); ++i) {
    const auto& sec = f.sections[i];
    OptimizerSpec o;
    o.kind = parse_optimizer_kind(sec.name);
    o.label = sec.label.empty() ? sec.name : sec.name + "-" + sec.label;
    for (char& ch : o.label)
      if (ch == ' ' || ch == '/') ch = '_';
    o.cadam = default_cadam_schedule(cfg.problem.kind);
    if (o.kind == OptimizerKind::kAscpg) o.baseline = BaselineSchedule::ascpg();
    detail::SectionReader r(sec, origin);
    detail::read_optimizer(r, o);
    r.reject_unknown();
    cfg.optimizers.push_back(std::move(o));
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.string());
}

}  // namespace cadam::bench
