#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <vector>

#include "rerand/bayes.hpp"
#include "rerand/error.hpp"
#include "test_util.hpp"

using namespace rerand;
using Catch::Approx;

namespace {

ObservedData simulated(RngStream& s, int n, int K, double tau = 2.0) {
  Eigen::MatrixXd X(n, K);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < K; ++j) X(i, j) = s.normal();
  std::vector<std::uint8_t> w(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; i += 2) w[static_cast<std::size_t>(i)] = 1;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i)
    y[i] = 1.0 + X.row(i).sum() + (w[static_cast<std::size_t>(i)] ? tau + 0.5 * X(i, 0) : 0.0) +
           s.normal();
  return ObservedData(CovariateMatrix(X), Allocation(std::move(w)), y);
}

}  // namespace

TEST_CASE("coefficient block draws have the conjugate moments", "[bayes]") {
  RngStream s(61);
  Eigen::MatrixXd P(2, 2);
  P << 2.0, 0.5, 0.5, 1.0;
  Eigen::VectorXd rhs(2);
  rhs << 1.0, 2.0;
  const Eigen::MatrixXd cov = P.inverse();
  const Eigen::VectorXd mean = cov * rhs;
  const int n = 200000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd b = draw_coefficient_block(s, P, rhs);
    sum += b;
    sq += (b - mean) * (b - mean).transpose();
  }
  const Eigen::VectorXd m = sum / n;
  sq /= n;
  for (int j = 0; j < 2; ++j) CHECK(std::abs(m[j] - mean[j]) < 4 * std::sqrt(cov(j, j) / n));
  CHECK((sq - cov).cwiseAbs().maxCoeff() < 0.01);
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(draw_coefficient_block(s, bad, rhs), NumericError);
}

TEST_CASE("uninformative data returns the prior", "[bayes]") {
  RngStream s(62);
  const ObservedData d = simulated(s, 20, 2);
  PriorSpec prior;
  prior.coef_sd = 1.0;
  GibbsOptions opts;
  opts.H = 20000;
  opts.burn_in = 0;
  opts.fixed_variances = std::array<double, 2>{1e14, 1e14};
  const auto draws = gibbs_sample(s, d, BayesModel::NointB, prior, opts);
  REQUIRE(draws.size() == 20000);
  std::vector<double> g, b1;
  for (const auto& dr : draws) {
    g.push_back(dr.gamma);
    b1.push_back(dr.beta0[1]);
    REQUIRE(!dr.delta);
  }
  const auto mg = testutil::moments(g);
  const auto mb = testutil::moments(b1);
  CHECK(std::abs(mg.mean) < 4 * mg.se());
  CHECK(mg.var == Approx(1.0).epsilon(0.05));
  CHECK(mb.var == Approx(1.0).epsilon(0.05));
}

TEST_CASE("flat prior with known variances centers on least squares", "[bayes]") {
  RngStream s(63);
  const ObservedData d = simulated(s, 60, 2);
  for (BayesModel model : {BayesModel::NointB, BayesModel::IntB}) {
    const Eigen::MatrixXd Z = bayes_design(d, model);
    const Eigen::MatrixXd G = (Z.transpose() * Z).inverse();
    const Eigen::VectorXd ols = G * Z.transpose() * d.y;
    PriorSpec prior;
    prior.coef_sd = 1e6;
    GibbsOptions opts;
    opts.H = 20000;
    opts.burn_in = 0;
    opts.fixed_variances = std::array<double, 2>{1.0, 1.0};
    const auto draws = gibbs_sample(s, d, model, prior, opts);
    std::vector<double> g;
    for (const auto& dr : draws) g.push_back(dr.gamma);
    const auto m = testutil::moments(g);
    CHECK(std::abs(m.mean - ols[1]) < 4 * std::sqrt(G(1, 1) / g.size()));
    CHECK(m.var == Approx(G(1, 1)).epsilon(0.05));
    CHECK(draws.front().sigma0_sq == 1.0);
    CHECK(draws.front().delta.has_value() == (model == BayesModel::IntB));
  }
}

TEST_CASE("imputation on a two unit instance", "[bayes]") {
  Eigen::MatrixXd X(2, 1);
  X << 1, 3;
  Eigen::VectorXd y(2);
  y << 5, 2;
  const ObservedData d(CovariateMatrix(X), Allocation(std::vector<std::uint8_t>{1, 0}), y);
  PosteriorDraw draw;
  draw.alpha0 = 1.0;
  draw.gamma = 2.0;
  draw.beta0 = Eigen::VectorXd::Constant(1, 0.5);
  draw.sigma0_sq = 1.0;
  draw.sigma1_sq = 4.0;
  CHECK(impute_tau(draw, d, BayesModel::NointB) == Approx(2.125).epsilon(1e-14));
  draw.delta = Eigen::VectorXd::Constant(1, 0.25);
  CHECK(impute_tau(draw, d, BayesModel::IntB) == Approx(2.9375).epsilon(1e-14));
}

TEST_CASE("equal arm variances impute the model contrast", "[bayes]") {
  RngStream s(64);
  const ObservedData d = simulated(s, 30, 3);
  PosteriorDraw draw;
  draw.alpha0 = 0.3;
  draw.gamma = 1.7;
  draw.beta0 = Eigen::VectorXd::Constant(3, -0.4);
  draw.delta = Eigen::VectorXd::Constant(3, 0.9);
  draw.sigma0_sq = draw.sigma1_sq = 2.5;
  // With centered covariates the interaction averages out.
  CHECK(impute_tau(draw, d, BayesModel::IntB) == Approx(1.7).epsilon(1e-12));
  CHECK(impute_tau(draw, d, BayesModel::NointB) == Approx(1.7).epsilon(1e-12));
}

TEST_CASE("summed imputation equals the per unit loop", "[bayes]") {
  RngStream s(65);
  const ObservedData d = simulated(s, 40, 3);
  for (BayesModel model : {BayesModel::NointB, BayesModel::IntB}) {
    GibbsOptions opts;
    opts.H = 300;
    opts.burn_in = 50;
    RngStream a(66), b(66);
    const auto draws = gibbs_sample(a, d, model, {}, opts);
    const TauPosterior post = sample_tau_posterior(b, d, model, {}, opts);
    REQUIRE(post.samples.size() == draws.size());
    CHECK(post.H == 300);
    CHECK(post.burn_in == 50);
    for (std::size_t h = 0; h < draws.size(); ++h)
      CHECK(post.samples[h] == Approx(impute_tau(draws[h], d, model)).epsilon(1e-10).margin(1e-12));
  }
}

TEST_CASE("credible interval from posterior quantiles", "[bayes]") {
  TauPosterior post;
  post.samples.resize(1000);
  std::iota(post.samples.begin(), post.samples.end(), 1.0);
  std::reverse(post.samples.begin(), post.samples.end());
  const IntervalEstimate est = credible_interval(post, 0.95, Method::IntB);
  CHECK(est.method == Method::IntB);
  CHECK(est.lower == Approx(25.975).epsilon(1e-14));
  CHECK(est.upper == Approx(975.025).epsilon(1e-14));
  CHECK(est.point == Approx(500.5).epsilon(1e-14));
  CHECK(!est.se);
  post.samples.resize(99);
  CHECK_THROWS_AS(credible_interval(post, 0.95, Method::IntB), SizeError);
}

TEST_CASE("sampler is deterministic per stream", "[bayes]") {
  RngStream s(67);
  const ObservedData d = simulated(s, 30, 2);
  GibbsOptions opts;
  opts.H = 200;
  opts.burn_in = 20;
  RngStream a(68), b(68), c(69);
  const IntervalEstimate ea = bayes_interval(a, d, BayesModel::NointB, {}, opts);
  const IntervalEstimate eb = bayes_interval(b, d, BayesModel::NointB, {}, opts);
  const IntervalEstimate ec = bayes_interval(c, d, BayesModel::NointB, {}, opts);
  CHECK(ea.lower == eb.lower);
  CHECK(ea.upper == eb.upper);
  CHECK(ea.lower != ec.lower);
  CHECK(ea.method == Method::NointB);
}

TEST_CASE("chain halves agree after burn-in", "[bayes]") {
  RngStream s(70);
  const ObservedData d = simulated(s, 50, 3);
  GibbsOptions opts;
  opts.H = 8000;
  opts.burn_in = 500;
  RngStream chain(71);
  const TauPosterior post = sample_tau_posterior(chain, d, BayesModel::IntB, {}, opts);
  const std::vector<double> first(post.samples.begin(), post.samples.begin() + 4000);
  const std::vector<double> second(post.samples.begin() + 4000, post.samples.end());
  const auto m1 = testutil::moments(first);
  const auto m2 = testutil::moments(second);
  const double sd = std::sqrt(0.5 * (m1.var + m2.var));
  CHECK(std::abs(m1.mean - m2.mean) < 0.15 * sd);
  CHECK(m1.var == Approx(m2.var).epsilon(0.2));
}

TEST_CASE("posterior concentrates as n grows", "[bayes]") {
  RngStream s(72);
  const ObservedData small = simulated(s, 50, 3);
  const ObservedData large = simulated(s, 400, 3);
  GibbsOptions opts;
  opts.H = 2000;
  opts.burn_in = 500;
  RngStream a(73), b(74);
  const IntervalEstimate es = bayes_interval(a, small, BayesModel::IntB, {}, opts);
  const IntervalEstimate el = bayes_interval(b, large, BayesModel::IntB, {}, opts);
  CHECK(el.length() < 0.55 * es.length());
  const IntervalEstimate ols = adjusted_interval(large, true, SandwichVariant::EHW);
  CHECK(std::abs(el.point - ols.point) < 0.1);
  CHECK(el.length() == Approx(ols.length()).epsilon(0.25));
}

TEST_CASE("degenerate inputs are rejected", "[bayes]") {
  RngStream s(75);
  Eigen::MatrixXd X(8, 3);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 3; ++j) X(i, j) = s.normal();
  const ObservedData d(CovariateMatrix(X), Allocation(std::vector<std::uint8_t>{1, 0, 1, 0, 1, 0, 1, 0}),
                       Eigen::VectorXd::LinSpaced(8, 0, 1));
  CHECK_THROWS_AS(sample_tau_posterior(s, d, BayesModel::IntB, {}), DegenerateDesignError);
  const ObservedData lone(CovariateMatrix(X), Allocation(std::vector<std::uint8_t>{1, 0, 0, 0, 0, 0, 0, 0}),
                          Eigen::VectorXd::LinSpaced(8, 0, 1));
  CHECK_THROWS_AS(sample_tau_posterior(s, lone, BayesModel::NointB, {}), DegenerateDesignError);
  PriorSpec bad;
  bad.var_scale = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  GibbsOptions opts;
  opts.H = 0;
  const ObservedData ok = simulated(s, 20, 2);
  CHECK_THROWS_AS(sample_tau_posterior(s, ok, BayesModel::NointB, {}, opts), DomainError);
}
