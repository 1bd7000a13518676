#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "rerand/error.hpp"
#include "rerand/estimators.hpp"
#include "test_util.hpp"

using namespace rerand;
using Catch::Approx;

namespace {

ObservedData make(const Eigen::MatrixXd& X, std::vector<std::uint8_t> w, const Eigen::VectorXd& y) {
  return ObservedData(CovariateMatrix(X), Allocation(std::move(w)), y);
}

ObservedData synthetic_data(RngStream& s, int n, int K, bool heteroskedastic = true) {
  Eigen::MatrixXd X(n, K);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < K; ++j) X(i, j) = s.normal();
  std::vector<std::uint8_t> w(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n / 2; ++i) w[static_cast<std::size_t>(2 * i)] = 1;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double scale = heteroskedastic ? 0.5 + std::abs(X(i, 0)) : 1.0;
    y[i] = 1.0 + 2.0 * w[static_cast<std::size_t>(i)] + X.row(i).sum() +
           (w[static_cast<std::size_t>(i)] ? X(i, 0) : 0.0) + scale * s.normal();
  }
  return make(X, std::move(w), y);
}

Eigen::MatrixXd dense_sandwich(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, int variant) {
  const Eigen::MatrixXd G = (Z.transpose() * Z).inverse();
  const Eigen::VectorXd b = G * Z.transpose() * y;
  const Eigen::VectorXd u = y - Z * b;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(Z.cols(), Z.cols());
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const Eigen::VectorXd z = Z.row(i).transpose();
    const double h = z.dot(G * z);
    double e2 = u[i] * u[i];
    if (variant == 1) e2 /= (1.0 - h);
    if (variant == 2) e2 /= (1.0 - h) * (1.0 - h);
    meat += e2 * z * z.transpose();
  }
  return G * meat * G;
}

}  // namespace

TEST_CASE("method labels round trip", "[estimators]") {
  for (Method m : kAllMethods) CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_method("Nope"), UsageError);
  CHECK(is_bayesian(Method::NointB));
  CHECK(!is_bayesian(Method::LDR));
  CHECK(adjusted_method(true, SandwichVariant::HC3) == Method::IntH3);
}

TEST_CASE("difference in means", "[estimators]") {
  Eigen::MatrixXd X(4, 1);
  X << 1, 2, 3, 4;
  Eigen::VectorXd y(4);
  y << 3, 1, 4, 0;
  const ObservedData d = make(X, {1, 0, 1, 0}, y);
  CHECK(mean_difference(d) == Approx(3.0));
  Eigen::VectorXd y2(4);
  y2 << 2.5, 1, 3.5, 1;
  CHECK(mean_difference(make(X, {1, 0, 1, 0}, y2)) == Approx(2.0));
  CHECK_THROWS_AS(mean_difference(make(X, {0, 0, 0, 0}, y)), DegenerateDesignError);
}

TEST_CASE("Neyman interval examples", "[estimators]") {
  Eigen::MatrixXd X(4, 1);
  X << 1, 2, 3, 4;
  Eigen::VectorXd y(4);
  y << 2.8, 0.8, 3.2, 1.2;
  const IntervalEstimate a = neyman_interval(make(X, {1, 0, 1, 0}, y));
  CHECK(a.method == Method::Neyman);
  CHECK(a.point == Approx(2.0));
  CHECK(*a.se == Approx(0.282842712474619).epsilon(1e-12));
  CHECK(*a.critical_value == 1.96);

  Eigen::VectorXd y2(4);
  y2 << 2.5, 1, 3.5, 1;
  const IntervalEstimate b = neyman_interval(make(X, {1, 0, 1, 0}, y2));
  CHECK(b.lower == Approx(1.02).epsilon(1e-12));
  CHECK(b.upper == Approx(2.98).epsilon(1e-12));
  CHECK(b.length() == Approx(1.96).epsilon(1e-12));
  CHECK(b.covers(2.98));
  CHECK(!b.covers(3.0));

  Eigen::MatrixXd X3(3, 1);
  X3 << 1, 2, 3;
  Eigen::VectorXd y3(3);
  y3 << 1, 2, 3;
  CHECK_THROWS_AS(neyman_interval(make(X3, {1, 0, 0}, y3)), DegenerateDesignError);
}

TEST_CASE("OLS matches the normal equations", "[estimators]") {
  RngStream s(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 10 + static_cast<int>(s.uniform_index(40));
    const int p = 1 + static_cast<int>(s.uniform_index(6));
    Eigen::MatrixXd Z(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) Z(i, j) = s.normal() + (j == 0 ? 3.0 : 0.0);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = s.normal();
    const OlsFit fit = ols_fit(Z, y);
    const Eigen::MatrixXd G = (Z.transpose() * Z).inverse();
    const Eigen::VectorXd b = G * Z.transpose() * y;
    CHECK((fit.coefficients - b).norm() < 1e-10 * (1.0 + b.norm()));
    CHECK((fit.gram_inverse - G).norm() < 1e-10 * (1.0 + G.norm()));
    CHECK(fit.hat_diagonals.sum() == Approx(p).epsilon(1e-10));
    CHECK((Z.transpose() * fit.residuals).norm() < 1e-9);
    const Eigen::VectorXd h = (Z * G * Z.transpose()).diagonal();
    CHECK((fit.hat_diagonals - h).norm() < 1e-10);
  }
}

TEST_CASE("sandwich covariance matches a dense oracle", "[estimators]") {
  RngStream s(32);
  const ObservedData d = synthetic_data(s, 40, 3);
  for (bool interaction : {false, true}) {
    const Eigen::MatrixXd Z = adjustment_design(d, interaction);
    const OlsFit fit = ols_fit(Z, d.y);
    const auto all = adjusted_intervals(d, interaction);
    const SandwichVariant variants[] = {SandwichVariant::EHW, SandwichVariant::HC2, SandwichVariant::HC3};
    for (int v = 0; v < 3; ++v) {
      const Eigen::MatrixXd oracle = dense_sandwich(Z, d.y, v);
      const Eigen::MatrixXd got = robust_covariance(fit, Z, variants[v]);
      CHECK((got - oracle).norm() < 1e-10 * oracle.norm());
      const IntervalEstimate est = adjusted_interval(d, interaction, variants[v]);
      CHECK(*est.se == Approx(std::sqrt(oracle(1, 1))).epsilon(1e-10));
      CHECK(est.point == Approx(fit.coefficients[1]).epsilon(1e-12));
      CHECK(est.method == adjusted_method(interaction, variants[v]));
      CHECK(all[static_cast<std::size_t>(v)].length() == Approx(est.length()).epsilon(1e-12));
    }
    CHECK(*all[0].se <= *all[1].se);
    CHECK(*all[1].se <= *all[2].se);
  }
}

TEST_CASE("adjustment design layout", "[estimators]") {
  Eigen::MatrixXd X(4, 1);
  X << 1, 2, 3, 6;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
  const ObservedData d = make(X, {1, 0, 0, 1}, y);
  const Eigen::MatrixXd Z0 = adjustment_design(d, false);
  Eigen::MatrixXd e0(4, 3);
  e0 << 1, 1, 1, 1, 0, 2, 1, 0, 3, 1, 1, 6;
  CHECK(Z0 == e0);
  const Eigen::MatrixXd Z1 = adjustment_design(d, true);
  Eigen::MatrixXd e1(4, 4);
  e1 << 1, 1, -2, -2, 1, 0, -1, 0, 1, 0, 0, 0, 1, 1, 3, 3;
  CHECK((Z1 - e1).norm() < 1e-15);
}

TEST_CASE("leverage one observation blocks HC2 and HC3", "[estimators]") {
  Eigen::MatrixXd Z(5, 2);
  Z << 1, 0, 1, 0, 1, 0, 1, 0, 1, 1;
  Eigen::VectorXd y(5);
  y << 1, 2, 3, 4, 5;
  const OlsFit fit = ols_fit(Z, y);
  CHECK(fit.hat_diagonals[4] == Approx(1.0));
  CHECK_NOTHROW(robust_covariance(fit, Z, SandwichVariant::EHW));
  CHECK_THROWS_AS(robust_covariance(fit, Z, SandwichVariant::HC2), LeverageError);
  CHECK_THROWS_AS(robust_covariance(fit, Z, SandwichVariant::HC3), LeverageError);
}

TEST_CASE("collinear designs are rejected with the column named", "[estimators]") {
  Eigen::MatrixXd Z(6, 3);
  Z << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10, 1, 6, 12;
  Eigen::VectorXd y(6);
  y << 1, 2, 3, 4, 5, 7;
  const std::vector<std::string> names{"intercept", "a", "b"};
  try {
    ols_fit(Z, y, names);
    FAIL("expected CollinearityError");
  } catch (const CollinearityError& e) {
    REQUIRE(e.columns().size() == 1);
    CHECK((e.columns()[0] == 1 || e.columns()[0] == 2));
    CHECK(std::string(e.what()).find(names[static_cast<std::size_t>(e.columns()[0])]) != std::string::npos);
  }
  CHECK_THROWS_AS(ols_fit(Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Ones(2)), DegenerateDesignError);

  Eigen::MatrixXd X(8, 2);
  X << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12, 7, 14, 9, 18;
  Eigen::VectorXd yy = Eigen::VectorXd::LinSpaced(8, 0, 7);
  const ObservedData d = make(X, {1, 0, 1, 0, 1, 0, 1, 0}, yy);
  CHECK_THROWS_AS(adjusted_interval(d, false, SandwichVariant::EHW), CollinearityError);
}

TEST_CASE("treatment coefficient obeys Frisch-Waugh", "[estimators]") {
  RngStream s(33);
  const ObservedData d = synthetic_data(s, 50, 3);
  const Eigen::MatrixXd Z = adjustment_design(d, false);
  Eigen::MatrixXd others(50, 4);
  others << Z.col(0), Z.rightCols(3);
  const Eigen::MatrixXd P = others * (others.transpose() * others).inverse() * others.transpose();
  const Eigen::VectorXd rw = Z.col(1) - P * Z.col(1);
  const Eigen::VectorXd ry = d.y - P * d.y;
  const double fw = rw.dot(ry) / rw.squaredNorm();
  CHECK(adjusted_interval(d, false, SandwichVariant::EHW).point == Approx(fw).epsilon(1e-10));
}

TEST_CASE("interacted point estimate is the difference of arm fits at the mean", "[estimators]") {
  RngStream s(34);
  const ObservedData d = synthetic_data(s, 40, 2);
  const Eigen::RowVectorXd xbar = d.X.column_means();
  double fitted[2];
  for (int arm = 0; arm < 2; ++arm) {
    const int m = arm ? d.w.treated_count() : d.w.control_count();
    Eigen::MatrixXd Z(m, 3);
    Eigen::VectorXd y(m);
    int r = 0;
    for (int i = 0; i < 40; ++i) {
      if (d.w.treated(i) != (arm == 1)) continue;
      Z(r, 0) = 1.0;
      Z.block(r, 1, 1, 2) = d.X.values().row(i);
      y[r++] = d.y[i];
    }
    const Eigen::VectorXd b = (Z.transpose() * Z).ldlt().solve(Z.transpose() * y);
    fitted[arm] = b[0] + xbar.dot(b.tail(2));
  }
  CHECK(adjusted_interval(d, true, SandwichVariant::EHW).point ==
        Approx(fitted[1] - fitted[0]).epsilon(1e-10));
}

TEST_CASE("estimators are equivariant in the outcome", "[estimators]") {
  RngStream s(35);
  const ObservedData d = synthetic_data(s, 30, 2);
  Eigen::VectorXd shifted = d.y.array() + 7.0;
  Eigen::VectorXd scaled = -3.0 * d.y;
  Eigen::VectorXd effect = d.y;
  for (int i = 0; i < 30; ++i)
    if (d.w.treated(i)) effect[i] += 1.5;
  const ObservedData ds(d.X, d.w, shifted), dc(d.X, d.w, scaled), de(d.X, d.w, effect);

  const IntervalEstimate n0 = neyman_interval(d);
  CHECK(neyman_interval(ds).point == Approx(n0.point).epsilon(1e-10));
  CHECK(neyman_interval(dc).length() == Approx(3.0 * n0.length()).epsilon(1e-10));
  CHECK(neyman_interval(de).point == Approx(n0.point + 1.5).epsilon(1e-10));
  CHECK(neyman_interval(de).length() == Approx(n0.length()).epsilon(1e-10));

  for (bool interaction : {false, true}) {
    const auto base = adjusted_intervals(d, interaction);
    const auto sh = adjusted_intervals(ds, interaction);
    const auto sc = adjusted_intervals(dc, interaction);
    const auto ef = adjusted_intervals(de, interaction);
    for (int v = 0; v < 3; ++v) {
      const auto k = static_cast<std::size_t>(v);
      CHECK(sh[k].point == Approx(base[k].point).epsilon(1e-9));
      CHECK(sh[k].length() == Approx(base[k].length()).epsilon(1e-9));
      CHECK(sc[k].point == Approx(-3.0 * base[k].point).epsilon(1e-9));
      CHECK(sc[k].length() == Approx(3.0 * base[k].length()).epsilon(1e-9));
      CHECK(ef[k].point == Approx(base[k].point + 1.5).epsilon(1e-9));
      CHECK(ef[k].length() == Approx(base[k].length()).epsilon(1e-9));
    }
  }
}

TEST_CASE("exact linear outcomes give a zero width adjusted interval", "[estimators]") {
  RngStream s(36);
  const ObservedData d = synthetic_data(s, 20, 2);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i)
    y[i] = 4.0 + 2.5 * (d.w.treated(i) ? 1.0 : 0.0) + 3.0 * d.X.values()(i, 0) - d.X.values()(i, 1);
  const ObservedData exact(d.X, d.w, y);
  const IntervalEstimate e = adjusted_interval(exact, false, SandwichVariant::HC2);
  CHECK(e.point == Approx(2.5).epsilon(1e-12));
  CHECK(e.length() < 1e-9);
}
