#pragma once

// Numeric checks of the analysis: tracking-error recursions, the power-law
// recursion bound, empirical problem constants and log-log decay fits.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "cadam/optimizers.hpp"
#include "cadam/problem.hpp"
#include "cadam/run.hpp"
#include "cadam/schedule.hpp"

namespace cadam {

/// ||g(x_t) - y_t||^2 for the current state.
inline double tracking_error(const CompositionalProblem& problem, const CAdamState& state) {
  auto g = problem.exact_inner(state.x);
  if (!g) throw InvalidConfig("tracking_error needs a problem with exact_inner");
  expect_dim(state.y.size(), problem.q(), "tracking_error");
  return (*g - state.y).squaredNorm();
}

// ---------------------------------------------------------------------------
// Tracking-error recursions, iterated with equality.

struct BoundState {
  std::size_t t = 1;
  double D = 0.0;
  double F_sq = 0.0;
  double E_sq = 0.0;
  double envelope = 0.0;  // (L_g^2 / 2) D^2 + 2 E_sq
};

/// States for t = 1..T. D_1 = F_1 = 0, E_1 = ||g(x_1)||^2.
///   F_{t+1}^2 = (1 - beta_t) F_t^2 + 4 M_g^2 M_f^2 alpha_t^2 / (eps^2 beta_t)
///   D_{t+1}   = (1 - beta_t) D_t + 2 M_g^2 M_f^2 alpha_t^2 / (eps^2 beta_t) + beta_t F_t^2
///   E_{t+1}   = (1 - beta_t)^2 E_t + beta_t^2 sigma_3^2 / K3_t
inline std::vector<BoundState> lemma2_bound_recursions(const ScheduleConfig& cfg, const ProblemConstants& k,
                                                       double g_x1_norm_sq, std::size_t T) {
  cfg.validate();
  if (T < 1) throw InvalidConfig("lemma2_bound_recursions: T must be >= 1");
  const double L_half = 0.5 * k.L_g * k.L_g;
  const double drive = k.M_g * k.M_g * k.M_f * k.M_f / (cfg.epsilon * cfg.epsilon);
  std::vector<BoundState> out;
  out.reserve(T);
  BoundState s;
  s.E_sq = g_x1_norm_sq;
  s.envelope = L_half * s.D * s.D + 2.0 * s.E_sq;
  out.push_back(s);
  for (std::size_t t = 1; t < T; ++t) {
    const StepParams p = theorem1_schedule(t, cfg);
    const double a2b = p.alpha * p.alpha / p.beta;
    BoundState n;
    n.t = t + 1;
    n.F_sq = (1.0 - p.beta) * s.F_sq + 4.0 * drive * a2b;
    n.D = (1.0 - p.beta) * s.D + 2.0 * drive * a2b + p.beta * s.F_sq;
    n.E_sq = (1.0 - p.beta) * (1.0 - p.beta) * s.E_sq +
             p.beta * p.beta * k.sigma3_sq / static_cast<double>(p.K3);
    n.envelope = L_half * n.D * n.D + 2.0 * n.E_sq;
    out.push_back(n);
    s = n;
  }
  return out;
}

/// Smallest t such that the envelope is nonincreasing from t to the end of
/// the sequence; nullopt if it increases at the very last step.
inline std::optional<std::size_t> envelope_burn_in(const std::vector<BoundState>& states) {
  if (states.empty()) return std::nullopt;
  std::size_t k = states.size() - 1;
  while (k > 0 && states[k].envelope <= states[k - 1].envelope) --k;
  if (k == states.size() - 1 && states.size() > 1 && states[k].envelope > states[k - 1].envelope) {
    return std::nullopt;
  }
  return states[k].t;
}

/// theta_j^{(t)} = beta_j prod_{i=j+1}^{t} (1 - beta_i), j = 0..t.
/// `betas[i]` is beta_i; betas[0] must be 1.
inline std::vector<double> theta_coefficients(const std::vector<double>& betas, std::size_t t) {
  if (betas.size() <= t) throw InvalidConfig("theta_coefficients: need beta_0..beta_t");
  std::vector<double> theta(t + 1);
  double tail = 1.0;
  for (std::size_t j = t + 1; j-- > 0;) {
    theta[j] = betas[j] * tail;
    tail *= 1.0 - betas[j];
  }
  return theta;
}

// ---------------------------------------------------------------------------
// A_{t+1} = (1 - eta_t + C_1 eta_t^2) A_t + C_2 zeta_t,  eta_t = C_eta / t^a,
// zeta_t = C_zeta / t^b.

struct Lemma3Config {
  double C_eta = 2.0;
  double C_zeta = 1.0;
  double C_1 = 0.0;
  double C_2 = 0.0;
  double a = 0.5;
  double b = 1.0;
  double A_1 = 0.0;

  double multiplier(std::size_t t) const {
    const double eta = C_eta / std::pow(static_cast<double>(t), a);
    return 1.0 - eta + C_1 * eta * eta;
  }

  /// Throws HypothesisViolation unless C_eta > 1 + b - a, (b - a) outside
  /// [-1, 0], a <= 1 and the remaining constants are admissible.
  void check_hypotheses() const {
    if (!(C_eta > 1.0 + b - a)) throw HypothesisViolation("Lemma 3 needs C_eta > 1 + b - a");
    if (b - a >= -1.0 && b - a <= 0.0) throw HypothesisViolation("Lemma 3 needs (b - a) outside [-1, 0]");
    if (a > 1.0) throw HypothesisViolation("Lemma 3 needs a <= 1");
    if (!(C_zeta > 0.0) || C_1 < 0.0 || C_2 < 0.0 || A_1 < 0.0) {
      throw HypothesisViolation("Lemma 3 needs C_zeta > 0 and C_1, C_2, A_1 >= 0");
    }
  }

  /// The induction step additionally uses b - a > 0 (convexity step) and a
  /// nonnegative multiplier (to substitute the bound on A_t). Checked for t < T.
  bool induction_step_applies(std::size_t T) const {
    if (!(b - a > 0.0)) return false;
    for (std::size_t t = 1; t < T; ++t)
      if (multiplier(t) < 0.0) return false;
    return true;
  }
};

struct Lemma3Result {
  std::vector<double> A;  // A[t-1] = A_t
  double C_A = 0.0;
  bool holds = true;
  std::optional<std::size_t> first_violation;  // smallest t with A_t > C_A / t^{b-a}
};

inline Lemma3Result lemma3_recursion(const Lemma3Config& cfg, std::size_t T) {
  cfg.check_hypotheses();
  if (T < 1) throw InvalidConfig("lemma3_recursion: T must be >= 1");
  Lemma3Result r;
  r.A.reserve(T);
  double A = cfg.A_1;
  r.A.push_back(A);
  for (std::size_t t = 1; t < T; ++t) {
    const double zeta = cfg.C_zeta / std::pow(static_cast<double>(t), cfg.b);
    A = cfg.multiplier(t) * A + cfg.C_2 * zeta;
    r.A.push_back(A);
  }

  const double d = cfg.b - cfg.a;
  const double horizon = std::pow(cfg.C_1 * cfg.C_eta * cfg.C_eta, 1.0 / cfg.a) + 1.0;
  const std::size_t last = static_cast<std::size_t>(std::min(static_cast<double>(T), std::floor(horizon)));
  double head = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t <= std::max<std::size_t>(last, 1); ++t) {
    head = std::max(head, r.A[t - 1] * std::pow(static_cast<double>(t), d));
  }
  r.C_A = head + cfg.C_2 * cfg.C_zeta / (cfg.C_eta - 1.0 - d);

  for (std::size_t t = 1; t <= T; ++t) {
    const double bound = r.C_A / std::pow(static_cast<double>(t), d);
    if (r.A[t - 1] > bound + 1e-12 * std::abs(bound)) {
      r.holds = false;
      r.first_violation = t;
      break;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Empirical constants.

/// Draws a decision point x in R^p.
using DomainSampler = std::function<Vector(Stream&)>;

struct EstimateOptions {
  std::size_t draws_per_point = 16;  // oracle draws used for each variance estimate
  double min_distance = 1e-3;        // difference-quotient pair distances
  double max_distance = 1.0;
};

namespace detail {

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

/// Unbiased variance from pairwise differences; exactly zero for identical draws.
template <class T>
double pairwise_variance(const std::vector<T>& draws) {
  const std::size_t S = draws.size();
  if (S < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < S; ++k)
    for (std::size_t l = k + 1; l < S; ++l) acc += (draws[k] - draws[l]).squaredNorm();
  return acc / static_cast<double>(S * (S - 1));
}

inline Vector random_offset(Index n, Stream& s, double lo, double hi) {
  Vector u = s.normal_vector(n);
  const double norm = u.norm();
  if (norm == 0.0) u = Vector::Unit(n, 0);
  else u /= norm;
  return s.uniform(lo, hi) * u;
}

}  // namespace detail

/// Running max-type estimates; each one can only grow as points are added.
class ConstantsEstimator {
 public:
  ConstantsEstimator(const CompositionalProblem& problem, EstimateOptions options = {})
      : problem_(problem), opt_(options) {
    if (opt_.draws_per_point < 2) throw InvalidConfig("estimate_constants needs >= 2 draws per point");
    if (!(opt_.min_distance > 0.0) || opt_.max_distance < opt_.min_distance) {
      throw InvalidConfig("estimate_constants: bad pair distance range");
    }
  }

  void add_point(const Vector& x, Stream& s) {
    expect_dim(x.size(), problem_.p(), "estimate_constants point");
    const std::size_t S = opt_.draws_per_point;
    const Index p = problem_.p(), q = problem_.q();

    Vector y;
    if (auto g = problem_.exact_inner(x)) y = *g;
    else y = problem_.draw_inner_value(x, s);
    if (auto J = problem_.exact_objective(x)) c_.B_f = std::max(c_.B_f, std::abs(*J));

    std::vector<Vector> values, outer;
    std::vector<Matrix> jacobians;
    for (std::size_t k = 0; k < S; ++k) {
      Stream before = s;
      InnerSample smp = problem_.draw_inner(x, s);
      Matrix jac = smp.jacobian.to_dense();
      c_.M_g = std::max(c_.M_g, detail::spectral_norm(jac));

      const Vector x2 = x + detail::random_offset(p, s, opt_.min_distance, opt_.max_distance);
      Stream replay = before;
      const Matrix jac2 = problem_.draw_inner(x2, replay).jacobian.to_dense();
      c_.L_g = std::max(c_.L_g, detail::spectral_norm(jac2 - jac) / (x2 - x).norm());

      values.push_back(std::move(smp.value));
      jacobians.push_back(std::move(jac));
    }
    for (std::size_t k = 0; k < S; ++k) {
      Stream before = s;
      Vector grad = problem_.draw_outer(y, s);
      c_.M_f = std::max(c_.M_f, grad.norm());
      const Vector y2 = y + detail::random_offset(q, s, opt_.min_distance, opt_.max_distance);
      Stream replay = before;
      const Vector grad2 = problem_.draw_outer(y2, replay);
      c_.L_f = std::max(c_.L_f, (grad2 - grad).norm() / (y2 - y).norm());
      outer.push_back(std::move(grad));
    }
    c_.sigma1_sq = std::max(c_.sigma1_sq, detail::pairwise_variance(outer));
    c_.sigma2_sq = std::max(c_.sigma2_sq, detail::pairwise_variance(jacobians));
    c_.sigma3_sq = std::max(c_.sigma3_sq, detail::pairwise_variance(values));
    ++points_;
  }

  const ProblemConstants& current() const { return c_; }
  std::size_t points() const { return points_; }

 private:
  const CompositionalProblem& problem_;
  EstimateOptions opt_;
  ProblemConstants c_;
  std::size_t points_ = 0;
};

/// M_f, M_g: max sampled gradient / Jacobian (spectral) norms. L_f, L_g: max
/// same-sample difference quotients. sigma^2: max per-point sample variance
/// (Jacobians in Frobenius norm). B_f: max |J(x)| when J is available.
inline ProblemConstants estimate_constants(const CompositionalProblem& problem, const DomainSampler& domain,
                                           std::size_t N, Stream& stream, EstimateOptions options = {}) {
  ConstantsEstimator est(problem, options);
  for (std::size_t n = 0; n < N; ++n) {
    const Vector x = domain(stream);
    est.add_point(x, stream);
  }
  return est.current();
}

// ---------------------------------------------------------------------------
// Decay exponents.

/// Least-squares slope of log(value) against log(t).
inline double loglog_slope(const std::vector<double>& ts, const std::vector<double>& values) {
  if (ts.size() != values.size() || ts.size() < 2) throw InvalidConfig("loglog_slope needs >= 2 matching points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (!(ts[i] > 0.0) || !(values[i] > 0.0)) throw InvalidConfig("loglog_slope needs positive t and values");
    const double lx = std::log(ts[i]), ly = std::log(values[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw InvalidConfig("loglog_slope needs at least two distinct t");
  return (n * sxy - sx * sy) / den;
}

/// Seed-mean of the tracking error at each checkpoint.
inline std::vector<double> mean_tracking_error(const std::vector<RunTrace>& traces,
                                               const std::vector<std::size_t>& checkpoints) {
  if (traces.empty()) throw InvalidConfig("mean_tracking_error needs at least one trace");
  std::vector<double> out;
  for (std::size_t t : checkpoints) {
    double acc = 0.0;
    for (const auto& tr : traces) {
      const TraceRow* row = tr.at(t);
      if (!row) throw InvalidConfig("trace has no row at t=" + std::to_string(t));
      acc += row->tracking_err;
    }
    out.push_back(acc / static_cast<double>(traces.size()));
  }
  return out;
}

inline double decay_exponent_fit(const std::vector<RunTrace>& traces, const std::vector<std::size_t>& checkpoints) {
  const std::vector<double> errs = mean_tracking_error(traces, checkpoints);
  std::vector<double> ts(checkpoints.begin(), checkpoints.end());
  return loglog_slope(ts, errs);
}

}  // namespace cadam
