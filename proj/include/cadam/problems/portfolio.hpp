#pragma once

// Mean-variance portfolio selection written as a composition:
//
//     g_j(x) = [x; -r_j^T x]                       (inner atom, R^n -> R^{n+1})
//     f_i(y) = ([r_i^T, 1] y)^2 - [r_i^T, 0] y     (outer atom)
//
// so that J(x) = (1/m) sum_i (r_i^T x - mean)^2 - mean, mean = (1/m) sum_i r_i^T x.

#include <cstring>
#include <memory>
#include <utility>

#include "cadam/problem.hpp"
#include "cadam/rng.hpp"

namespace cadam {

/// Return matrix, one row r_i per time point, one column per asset.
struct PortfolioData {
  Matrix R;

  Index m() const { return R.rows(); }
  Index n() const { return R.cols(); }

  void validate() const {
    if (R.rows() < 2) throw DimensionMismatch("portfolio data needs at least 2 time points");
    if (R.cols() < 1) throw DimensionMismatch("portfolio data needs at least 1 asset");
    if (!R.allFinite()) throw InvalidConfig("portfolio data contains non-finite entries");
  }
};

class PortfolioProblem final : public FiniteSumProblem {
 public:
  explicit PortfolioProblem(PortfolioData data) : data_(std::make_shared<const PortfolioData>(std::move(data))) {
    data_->validate();
    const Matrix& R = data_->R;
    mean_ = R.colwise().mean().transpose();
    const Matrix centered = R.rowwise() - mean_.transpose();
    cov_ = centered.transpose() * centered / static_cast<double>(R.rows());
    const Index n = R.cols(), m = R.rows();
    hash_ = fnv1a(&n, sizeof n);
    hash_ = fnv1a(&m, sizeof m, hash_);
    hash_ = fnv1a(R.data(), sizeof(double) * static_cast<std::size_t>(R.size()), hash_);
  }

  const PortfolioData& data() const { return *data_; }
  /// Column means of R.
  const Vector& mean_returns() const { return mean_; }
  /// Population covariance (1/m) sum_i (r_i - mean)(r_i - mean)^T.
  const Matrix& covariance() const { return cov_; }

  Index p() const override { return data_->n(); }
  Index q() const override { return data_->n() + 1; }

  std::size_t inner_atoms() const override { return static_cast<std::size_t>(data_->m()); }
  std::size_t outer_atoms() const override { return static_cast<std::size_t>(data_->m()); }

  InnerSample inner_atom(std::size_t j, const Vector& z) const override {
    const Index n = p();
    Matrix jac(n + 1, n);
    jac.topRows(n).setIdentity();
    jac.row(n) = -data_->R.row(static_cast<Index>(j));
    return {inner_atom_value(j, z), Jacobian::dense(std::move(jac))};
  }

  Vector inner_atom_value(std::size_t j, const Vector& z) const override {
    expect_dim(z.size(), p(), "portfolio inner atom");
    Vector out(q());
    out.head(p()) = z;
    out[p()] = -data_->R.row(static_cast<Index>(j)).dot(z);
    return out;
  }

  /// grad f_i(y) = 2 ([r_i; 1] . y) [r_i; 1] - [r_i; 0].
  Vector outer_atom(std::size_t i, const Vector& y) const override {
    expect_dim(y.size(), q(), "portfolio outer atom");
    const Index n = p();
    const auto r = data_->R.row(static_cast<Index>(i));
    const double s = r.dot(y.head(n)) + y[n];
    Vector g(q());
    g.head(n) = (2.0 * s - 1.0) * r.transpose();
    g[n] = 2.0 * s;
    return g;
  }

  std::optional<Vector> exact_inner(const Vector& x) const override {
    expect_dim(x.size(), p(), "portfolio exact_inner");
    Vector out(q());
    out.head(p()) = x;
    out[p()] = -mean_.dot(x);
    return out;
  }

  /// x^T Sigma x - mean^T x, the moment form of the objective.
  std::optional<double> exact_objective(const Vector& x) const override {
    expect_dim(x.size(), p(), "portfolio exact_objective");
    return x.dot(cov_ * x) - mean_.dot(x);
  }

  std::optional<Vector> exact_gradient(const Vector& x) const override {
    expect_dim(x.size(), p(), "portfolio exact_gradient");
    return Vector(2.0 * cov_ * x - mean_);
  }

  std::uint64_t content_hash() const override { return hash_; }

 private:
  std::shared_ptr<const PortfolioData> data_;
  Vector mean_;
  Matrix cov_;
  std::uint64_t hash_ = 0;
};

inline PortfolioProblem portfolio_problem(PortfolioData data) { return PortfolioProblem(std::move(data)); }

/// Literal evaluation over rows: (1/m) sum_i (r_i^T x - mean)^2 - mean.
inline double portfolio_objective_direct(const PortfolioData& data, const Vector& x) {
  expect_dim(x.size(), data.n(), "portfolio_objective_direct");
  const Vector rx = data.R * x;
  const double mean = rx.mean();
  return (rx.array() - mean).square().mean() - mean;
}

/// Evaluation through the composition: ybar = mean_j g_j(x), then mean_i f_i(ybar).
inline double portfolio_objective_compositional(const PortfolioData& data, const Vector& x) {
  expect_dim(x.size(), data.n(), "portfolio_objective_compositional");
  const Index m = data.m(), n = data.n();
  Vector ybar = Vector::Zero(n + 1);
  for (Index j = 0; j < m; ++j) {
    ybar.head(n) += x;
    ybar[n] -= data.R.row(j).dot(x);
  }
  ybar /= static_cast<double>(m);
  double acc = 0.0;
  for (Index i = 0; i < m; ++i) {
    const auto r = data.R.row(i);
    const double s = r.dot(ybar.head(n)) + ybar[n];
    acc += s * s - r.dot(ybar.head(n));
  }
  return acc / static_cast<double>(m);
}

/// Synthetic return regimes shaped like the benchmark data sets.
enum class ReturnsRegime { kLarge, kMedium, kSmall };

/// One-factor model in percent units, shaped like daily portfolio returns:
///
///     r_ik = mu_k + loading_k f_i + idio_k eps_ik,   f_i, eps_ik ~ N(0, 1) i.i.d.
///
/// scaled by factor_vol for f. Setting factor_vol = 0 gives independent assets.
struct ReturnsSpec {
  Index m = 0;
  Index n = 0;
  double drift_lo = 0.01;  // per-asset mean, uniform in [drift_lo, drift_hi]
  double drift_hi = 0.07;
  double factor_vol = 1.0;
  double loading_lo = 0.7;
  double loading_hi = 1.3;
  double idio_lo = 0.3;  // per-asset idiosyncratic standard deviation
  double idio_hi = 0.9;

  static ReturnsSpec for_regime(ReturnsRegime regime) {
    ReturnsSpec s;
    switch (regime) {
      case ReturnsRegime::kLarge: s.m = 13781; s.n = 100; break;
      case ReturnsRegime::kMedium: s.m = 7240; s.n = 25; break;
      case ReturnsRegime::kSmall: s.m = 200; s.n = 5; break;
    }
    return s;
  }
};

inline ReturnsRegime parse_regime(const std::string& s) {
  if (s == "large") return ReturnsRegime::kLarge;
  if (s == "medium") return ReturnsRegime::kMedium;
  if (s == "small") return ReturnsRegime::kSmall;
  throw InvalidConfig("unknown returns regime '" + s + "'");
}

/// Per-asset parameters actually used by synthetic_returns.
struct ReturnsModel {
  Vector means;
  Vector loadings;
  Vector idio;

  /// Population covariance implied by the model.
  Matrix covariance(double factor_vol) const {
    Matrix c = factor_vol * factor_vol * loadings * loadings.transpose();
    c.diagonal() += idio.cwiseAbs2();
    return c;
  }
};

inline ReturnsModel returns_model(const ReturnsSpec& spec, std::uint64_t seed) {
  Stream s = SeedTree(seed).stream(0, StreamKind::kData);
  ReturnsModel model{Vector(spec.n), Vector(spec.n), Vector(spec.n)};
  for (Index k = 0; k < spec.n; ++k) model.means[k] = s.uniform(spec.drift_lo, spec.drift_hi);
  for (Index k = 0; k < spec.n; ++k) model.loadings[k] = s.uniform(spec.loading_lo, spec.loading_hi);
  for (Index k = 0; k < spec.n; ++k) model.idio[k] = s.uniform(spec.idio_lo, spec.idio_hi);
  return model;
}

inline PortfolioData synthetic_returns(const ReturnsSpec& spec, std::uint64_t seed) {
  if (spec.m < 2 || spec.n < 1) throw InvalidConfig("synthetic_returns: need m >= 2 and n >= 1");
  if (spec.factor_vol < 0 || spec.idio_lo < 0 || spec.idio_hi < spec.idio_lo || spec.drift_hi < spec.drift_lo ||
      spec.loading_hi < spec.loading_lo) {
    throw InvalidConfig("synthetic_returns: bad ranges");
  }
  const ReturnsModel model = returns_model(spec, seed);
  Stream s = SeedTree(seed).stream(1, StreamKind::kData);
  PortfolioData data{Matrix(spec.m, spec.n)};
  for (Index i = 0; i < spec.m; ++i) {
    const double f = spec.factor_vol * s.normal();
    for (Index k = 0; k < spec.n; ++k) data.R(i, k) = model.means[k] + model.loadings[k] * f + model.idio[k] * s.normal();
  }
  return data;
}

inline PortfolioData synthetic_returns(Index m, Index n, std::uint64_t seed, ReturnsRegime regime) {
  ReturnsSpec spec = ReturnsSpec::for_regime(regime);
  if (m > 0) spec.m = m;
  if (n > 0) spec.n = n;
  return synthetic_returns(spec, seed);
}

}  // namespace cadam
