#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cadam/problem.hpp"
#include "cadam/problems/portfolio.hpp"
#include "cadam/problems/quad_compose.hpp"
#include "cadam/rng.hpp"
#include "cadam/schedule.hpp"

using namespace cadam;

namespace {

PortfolioProblem portfolio_from(std::initializer_list<std::initializer_list<double>> rows) {
  const Index m = static_cast<Index>(rows.size());
  const Index n = static_cast<Index>(rows.begin()->size());
  Matrix R(m, n);
  Index i = 0;
  for (const auto& row : rows) {
    Index k = 0;
    for (double v : row) R(i, k++) = v;
    ++i;
  }
  return PortfolioProblem(PortfolioData{R});
}

double rel_err(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

// --- schedule ----------------------------------------------------------------

TEST(Schedule, FirstStepWithPortfolioConstants) {
  const StepParams s = theorem1_schedule(1, ScheduleConfig{});
  EXPECT_DOUBLE_EQ(s.alpha, 0.01);
  EXPECT_DOUBLE_EQ(s.beta, 0.01);
  EXPECT_EQ(s.K1, 1u);
  EXPECT_EQ(s.K2, 1u);
  EXPECT_EQ(s.K3, 1u);
  EXPECT_DOUBLE_EQ(s.gamma1, 0.9);
}

TEST(Schedule, PowersOfThirtyTwo) {
  ScheduleConfig cfg;
  cfg.C_alpha = 1.0;
  const StepParams s = theorem1_schedule(32, cfg);
  EXPECT_NEAR(s.alpha, 0.5, 1e-15);
  EXPECT_EQ(s.K1, 16u);
  EXPECT_EQ(s.K2, 16u);
  EXPECT_EQ(s.K3, 16u);
}

TEST(Schedule, Gamma2MatchesFormulaAndStaysInRange) {
  ScheduleConfig cfg;
  for (std::size_t t : {1u, 2u, 10u, 1000u}) {
    const StepParams s = theorem1_schedule(t, cfg);
    const double d = 1.0 - std::pow(0.9, static_cast<double>(t));
    const double want = 1.0 - 0.01 / std::pow(static_cast<double>(t), 0.4) * d * d;
    EXPECT_NEAR(s.gamma2, want, 1e-15);
  }
  cfg.C_alpha = 1e6;  // formula goes negative, clamped to 0
  EXPECT_EQ(theorem1_schedule(5, cfg).gamma2, 0.0);
  cfg.C_alpha = 1e-300;  // formula rounds to 1, clamped below it
  EXPECT_LT(theorem1_schedule(5, cfg).gamma2, 1.0);
}

TEST(Schedule, MonotoneUnderDefaults) {
  const ScheduleConfig cfg;
  StepParams prev = theorem1_schedule(1, cfg);
  for (std::size_t t = 2; t <= 5000; ++t) {
    const StepParams s = theorem1_schedule(t, cfg);
    EXPECT_LT(s.alpha, prev.alpha);
    // (1 - 0.9^t)^2 grows faster than t^{-0.4} decays until t = 25, so gamma2 dips first.
    if (t <= 25) {
      EXPECT_LT(s.gamma2, prev.gamma2);
    } else {
      EXPECT_GE(s.gamma2, prev.gamma2);
    }
    EXPECT_LT(s.gamma2, 1.0);
    EXPECT_GE(s.K1, prev.K1);
    EXPECT_GE(s.K2, prev.K2);
    EXPECT_GE(s.K3, prev.K3);
    prev = s;
  }
}

TEST(Schedule, RejectsInvalidConstants) {
  auto bad = [](auto mutate) {
    ScheduleConfig cfg;
    mutate(cfg);
    EXPECT_THROW(theorem1_schedule(1, cfg), InvalidConfig);
  };
  bad([](ScheduleConfig& c) { c.C_alpha = 0.0; });
  bad([](ScheduleConfig& c) { c.C_1 = -1.0; });
  bad([](ScheduleConfig& c) { c.mu = 1.0; });
  bad([](ScheduleConfig& c) { c.mu = 0.0; });
  bad([](ScheduleConfig& c) { c.C_beta = 1.5; });
  bad([](ScheduleConfig& c) { c.C_gamma = 1.5; });
  bad([](ScheduleConfig& c) { c.epsilon = 0.0; });
  bad([](ScheduleConfig& c) { c.a = -0.1; });
  EXPECT_THROW(theorem1_schedule(0, ScheduleConfig{}), InvalidConfig);
  ScheduleConfig beta_one;
  beta_one.C_beta = 1.0;
  EXPECT_NO_THROW(theorem1_schedule(1, beta_one));
}

TEST(Schedule, DecayHypotheses) {
  ScheduleConfig cfg;
  EXPECT_TRUE(cfg.satisfies_decay_hypotheses());
  cfg.a = 0.1;
  cfg.b = 0.3;  // 2a - 2b = -0.4 in [-1, 0]
  EXPECT_FALSE(cfg.satisfies_decay_hypotheses());
  cfg.b = 1.2;
  EXPECT_FALSE(cfg.satisfies_decay_hypotheses());
}

TEST(Schedule, ConstantBatches) {
  const ScheduleConfig cfg = ScheduleConfig::constant_batches(ScheduleConfig{}, 10.0);
  for (std::size_t t : {1u, 7u, 1000u}) {
    const StepParams s = theorem1_schedule(t, cfg);
    EXPECT_EQ(s.samples(), 30u);
  }
}

TEST(Constants, LipschitzComposition) {
  EXPECT_EQ(lipschitz_composition_constant(2, 3, 1, 4), 16.0);
  EXPECT_EQ(lipschitz_composition_constant(0, 3, 0, 4), 0.0);
  EXPECT_EQ(lipschitz_composition_constant(1, 1, 1, 1), 2.0);
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    ProblemConstants k;
    k.M_g = u(g);
    k.L_f = u(g);
    k.L_g = u(g);
    k.M_f = u(g);
    EXPECT_DOUBLE_EQ(k.smoothness(), k.M_g * k.M_g * k.L_f + k.L_g * k.M_f);
  }
}

// --- oracles -------------------------------------------------------------------

TEST(Oracles, IdentityInnerSamples) {
  const auto prob = identity_problem([](const Vector& y, Stream&) { return y; }, 3);
  Stream s(1);
  const Vector z = Vector::LinSpaced(3, -1.0, 1.0);
  const auto batch = sample_inner(prob, z, 3, s);
  ASSERT_EQ(batch.size(), 3u);
  for (const auto& smp : batch) {
    EXPECT_EQ(smp.value, z);
    EXPECT_EQ(smp.jacobian.to_dense(), Matrix::Identity(3, 3));
  }
}

TEST(Oracles, PortfolioInnerAtomByHand) {
  const auto prob = portfolio_from({{0.5, 0.2}, {1.0, -1.0}});
  const Vector z = (Vector(2) << 1.0, 0.0).finished();
  const InnerSample smp = prob.inner_atom(0, z);
  EXPECT_EQ(smp.value, (Vector(3) << 1.0, 0.0, -0.5).finished());
  const Matrix want = (Matrix(3, 2) << 1, 0, 0, 1, -0.5, -0.2).finished();
  EXPECT_EQ(smp.jacobian.to_dense(), want);
}

TEST(Oracles, PortfolioOuterAtomByHand) {
  const auto prob = portfolio_from({{0.5, 0.2}, {1.0, 1.0}});
  const Vector y = (Vector(3) << 1.0, 0.0, -0.3).finished();
  const Vector g = prob.outer_atom(0, y);
  EXPECT_NEAR(g[0], -0.3, 1e-15);
  EXPECT_NEAR(g[1], -0.12, 1e-15);
  EXPECT_NEAR(g[2], 0.4, 1e-15);
  EXPECT_EQ(prob.outer_atom(1, Vector::Zero(3)), (Vector(3) << -1.0, -1.0, 0.0).finished());
}

TEST(Oracles, QuadraticOuterIsDeterministicWithoutNoise) {
  QuadCompose qc{Matrix::Identity(2, 2), Vector::Zero(2), 0.0, 0.0, 0.0};
  const QuadComposeProblem prob(qc);
  Stream s(3);
  const Vector y = (Vector(2) << 0.3, -2.0).finished();
  for (const auto& g : sample_outer(prob, y, 4, s)) EXPECT_EQ(g, y);
}

TEST(Oracles, EnumerationVisitsEveryIndexOnce) {
  const PortfolioProblem prob(synthetic_returns(ReturnsSpec{7, 2}, 1));
  Stream s = Stream::enumerating();
  const Vector x = Vector::Ones(2);
  const auto batch = sample_inner(prob, x, 7, s);
  std::vector<int> seen(7, 0);
  for (const auto& smp : batch) {
    for (std::size_t j = 0; j < 7; ++j)
      if (smp.value.isApprox(prob.inner_atom_value(j, x), 0.0)) ++seen[j];
  }
  for (int c : seen) EXPECT_EQ(c, 1);
}

TEST(Oracles, DimensionMismatch) {
  const auto prob = portfolio_from({{1.0, 2.0}, {3.0, 4.0}});
  Stream s(1);
  EXPECT_THROW(sample_inner(prob, Vector::Zero(3), 1, s), DimensionMismatch);
  EXPECT_THROW(sample_outer(prob, Vector::Zero(2), 1, s), DimensionMismatch);
}

TEST(Oracles, FiniteSumUnbiasedness) {
  std::mt19937_64 g(11);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    const PortfolioProblem prob(synthetic_returns(ReturnsSpec{6, 3}, 100 + trial));
    Vector x(3), y(4);
    for (auto& v : x) v = n01(g);
    for (auto& v : y) v = n01(g);
    const std::size_t m = prob.inner_atoms();

    Vector inner_mean = Vector::Zero(4);
    Matrix jac_mean = Matrix::Zero(4, 3);
    Vector outer_mean = Vector::Zero(4);
    for (std::size_t j = 0; j < m; ++j) {
      const auto smp = prob.inner_atom(j, x);
      inner_mean += smp.value / static_cast<double>(m);
      jac_mean += smp.jacobian.to_dense() / static_cast<double>(m);
      outer_mean += prob.outer_atom(j, y) / static_cast<double>(m);
    }
    EXPECT_LE(rel_err(inner_mean, *prob.exact_inner(x)), 1e-12);

    Vector pairs = Vector::Zero(3);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        pairs += prob.inner_atom(j, x).jacobian.apply_transpose(prob.outer_atom(i, y));
    pairs /= static_cast<double>(m * m);
    EXPECT_LE(rel_err(pairs, jac_mean.transpose() * outer_mean), 1e-12);
  }
}

// --- rng -----------------------------------------------------------------------

TEST(Rng, SameSeedSameSequence) {
  const SeedTree a(42), b(42);
  Stream s1 = a.stream(7, StreamKind::kInnerValue), s2 = b.stream(7, StreamKind::kInnerValue);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(s1.normal(), s2.normal());
    EXPECT_EQ(s1.index(1000), s2.index(1000));
  }
}

TEST(Rng, StreamsAreKeyedByIterationAndKind) {
  const SeedTree t(42);
  EXPECT_NE(t.seed_for(1, StreamKind::kOuterGrad), t.seed_for(2, StreamKind::kOuterGrad));
  EXPECT_NE(t.seed_for(1, StreamKind::kOuterGrad), t.seed_for(1, StreamKind::kInnerValue));
  EXPECT_NE(t.child(0).root(), t.child(1).root());
  EXPECT_NE(SeedTree(1).seed_for(1, StreamKind::kOuterGrad), SeedTree(2).seed_for(1, StreamKind::kOuterGrad));
}

TEST(Rng, BatchSizeAtOneStepDoesNotShiftLaterDraws) {
  const auto prob = portfolio_from({{1.0}, {2.0}, {3.0}, {4.0}});
  const SeedTree seeds(9);
  const Vector x = Vector::Ones(1);
  Stream a = seeds.stream(1, StreamKind::kInnerValue);
  (void)sample_inner(prob, x, 1, a);
  Stream b = seeds.stream(1, StreamKind::kInnerValue);
  (void)sample_inner(prob, x, 50, b);
  Stream later1 = seeds.stream(2, StreamKind::kInnerValue), later2 = seeds.stream(2, StreamKind::kInnerValue);
  EXPECT_EQ(sample_inner(prob, x, 5, later1)[4].value, sample_inner(prob, x, 5, later2)[4].value);
}
