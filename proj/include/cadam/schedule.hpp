#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "cadam/types.hpp"

namespace cadam {

/// Constants and exponents of the C-ADAM step-size / batch-size schedule.
///
///   alpha_t  = C_alpha / t^a
///   beta_t   = C_beta / t^b
///   K1_t     = ceil(C_1 t^c),  K2_t = ceil(C_2 t^c),  K3_t = ceil(C_3 t^e)
///   gamma1_t = C_gamma mu^t
///   gamma2_t = 1 - (C_alpha / t^{2a}) (1 - C_gamma mu^t)^2, clamped to [0, 1 - 1e-12)
///
/// The default exponents a = 1/5, b = 0, c = e = 4/5 are the ones that give
/// the O(delta^{-9/4}) oracle complexity.
struct ScheduleConfig {
  double C_alpha = 0.01;
  double C_beta = 0.01;
  double C_1 = 1.0;
  double C_2 = 1.0;
  double C_3 = 1.0;
  double C_gamma = 1.0;
  double mu = 0.9;
  double epsilon = 1e-8;
  double a = 0.2;
  double b = 0.0;
  double c = 0.8;
  double e = 0.8;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidConfig(std::string(name) + " must be positive");
    };
    positive(C_alpha, "C_alpha");
    positive(C_beta, "C_beta");
    positive(C_1, "C_1");
    positive(C_2, "C_2");
    positive(C_3, "C_3");
    positive(C_gamma, "C_gamma");
    positive(mu, "mu");
    positive(epsilon, "epsilon");
    if (C_beta > 1.0) throw InvalidConfig("C_beta must lie in (0, 1]");
    if (!(mu < 1.0)) throw InvalidConfig("mu must lie in (0, 1)");
    if (C_gamma > 1.0) throw InvalidConfig("C_gamma must lie in (0, 1]");
    for (double x : {a, b, c, e}) {
      if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidConfig("schedule exponents must be nonnegative");
    }
  }

  /// Hypotheses under which the tracking-error decay result is stated:
  /// (2a - 2b) outside [-1, 0] and b <= 1.
  bool satisfies_decay_hypotheses() const {
    const double d = 2.0 * a - 2.0 * b;
    return (d < -1.0 || d > 0.0) && b <= 1.0;
  }

  /// Batch sizes fixed at K for every t (c = e = 0).
  static ScheduleConfig constant_batches(ScheduleConfig cfg, double K) {
    cfg.C_1 = cfg.C_2 = cfg.C_3 = K;
    cfg.c = cfg.e = 0.0;
    return cfg;
  }
};

/// Schedule values for one iteration.
struct StepParams {
  double alpha = 0.0;
  double beta = 1.0;
  std::size_t K1 = 1;  // outer-gradient samples
  std::size_t K2 = 1;  // inner-Jacobian samples
  std::size_t K3 = 1;  // inner-value samples
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double epsilon = 1e-8;

  std::size_t samples() const { return K1 + K2 + K3; }
};

namespace detail {

inline std::size_t batch_size(double C, double t, double exponent) {
  // Relative slack absorbs pow() round-off such as 32^0.8 = 16.000000000000004.
  const double raw = C * std::pow(t, exponent);
  const double k = std::ceil(raw - 1e-9 * std::max(1.0, raw));
  return static_cast<std::size_t>(std::max(1.0, k));
}

}  // namespace detail

inline StepParams theorem1_schedule(std::size_t t, const ScheduleConfig& cfg) {
  if (t < 1) throw InvalidConfig("schedule is indexed from t = 1");
  cfg.validate();
  const double td = static_cast<double>(t);
  StepParams s;
  s.alpha = cfg.C_alpha / std::pow(td, cfg.a);
  s.beta = cfg.C_beta / std::pow(td, cfg.b);
  s.K1 = detail::batch_size(cfg.C_1, td, cfg.c);
  s.K2 = detail::batch_size(cfg.C_2, td, cfg.c);
  s.K3 = detail::batch_size(cfg.C_3, td, cfg.e);
  const double decay = cfg.C_gamma * std::pow(cfg.mu, td);
  s.gamma1 = decay;
  const double g2 = 1.0 - cfg.C_alpha / std::pow(td, 2.0 * cfg.a) * (1.0 - decay) * (1.0 - decay);
  s.gamma2 = std::clamp(g2, 0.0, 1.0 - 1e-12);
  s.epsilon = cfg.epsilon;
  return s;
}

/// Problem constants of the boundedness / smoothness / variance assumptions.
struct ProblemConstants {
  double B_f = 0.0;
  double M_f = 0.0;
  double M_g = 0.0;
  double L_f = 0.0;
  double L_g = 0.0;
  double sigma1_sq = 0.0;
  double sigma2_sq = 0.0;
  double sigma3_sq = 0.0;

  double smoothness() const;
};

/// Smoothness constant of J = f o g: M_g^2 L_f + L_g M_f.
inline double lipschitz_composition_constant(double M_g, double L_f, double L_g, double M_f) {
  return M_g * M_g * L_f + L_g * M_f;
}

inline double ProblemConstants::smoothness() const { return lipschitz_composition_constant(M_g, L_f, L_g, M_f); }

}  // namespace cadam
