#include "rerand/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "rerand/error.hpp"

namespace rerand {

namespace {

constexpr double kRankThreshold = 1e-10;
constexpr double kLeverageTolerance = 1e-10;

std::vector<std::string> adjustment_column_names(int K, bool interaction) {
  std::vector<std::string> names{"intercept", "W"};
  for (int j = 1; j <= K; ++j) names.push_back("x" + std::to_string(j));
  if (interaction)
    for (int j = 1; j <= K; ++j) names.push_back("W*x" + std::to_string(j));
  return names;
}

IntervalEstimate symmetric_interval(Method method, double point, double se, double critical) {
  IntervalEstimate est;
  est.method = method;
  est.point = point;
  est.se = se;
  est.critical_value = critical;
  est.lower = point - critical * se;
  est.upper = point + critical * se;
  return est;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Neyman: return "Neyman";
    case Method::NointE: return "NointE";
    case Method::IntE: return "IntE";
    case Method::NointH2: return "NointH2";
    case Method::IntH2: return "IntH2";
    case Method::NointH3: return "NointH3";
    case Method::IntH3: return "IntH3";
    case Method::NointB: return "NointB";
    case Method::IntB: return "IntB";
    case Method::LDR: return "LDR";
  }
  return "?";
}

Method parse_method(std::string_view label) {
  for (Method m : kAllMethods)
    if (to_string(m) == label) return m;
  throw UsageError("unknown method '" + std::string(label) + "'", "methods");
}

bool is_bayesian(Method method) { return method == Method::NointB || method == Method::IntB; }

std::string_view to_string(SandwichVariant variant) {
  switch (variant) {
    case SandwichVariant::EHW: return "EHW";
    case SandwichVariant::HC2: return "HC2";
    case SandwichVariant::HC3: return "HC3";
  }
  return "?";
}

ObservedData::ObservedData(CovariateMatrix X_, Allocation w_, Eigen::VectorXd y_obs)
    : X(std::move(X_)), w(std::move(w_)), y(std::move(y_obs)) {
  if (w.units() != X.units() || y.size() != X.units())
    throw DomainError("observed data: covariates, allocation and outcomes differ in length");
  if (!y.allFinite()) throw DomainError("observed data: outcomes contain non-finite values");
}

double mean_difference(const ObservedData& data) {
  const int n1 = data.w.treated_count();
  const int n0 = data.w.control_count();
  if (n1 == 0 || n0 == 0) throw DegenerateDesignError("mean difference needs both arms nonempty");
  double s1 = 0.0, s0 = 0.0;
  for (int i = 0; i < data.w.units(); ++i) (data.w.treated(i) ? s1 : s0) += data.y[i];
  return s1 / n1 - s0 / n0;
}

std::array<double, 2> arm_variances(const ObservedData& data) {
  const int n1 = data.w.treated_count();
  const int n0 = data.w.control_count();
  if (n1 < 2 || n0 < 2)
    throw DegenerateDesignError("within-arm variance needs at least 2 units per arm");
  double s1 = 0.0, s0 = 0.0;
  for (int i = 0; i < data.w.units(); ++i) (data.w.treated(i) ? s1 : s0) += data.y[i];
  const double m1 = s1 / n1, m0 = s0 / n0;
  double q1 = 0.0, q0 = 0.0;
  for (int i = 0; i < data.w.units(); ++i) {
    if (data.w.treated(i))
      q1 += (data.y[i] - m1) * (data.y[i] - m1);
    else
      q0 += (data.y[i] - m0) * (data.y[i] - m0);
  }
  return {q1 / (n1 - 1), q0 / (n0 - 1)};
}

IntervalEstimate neyman_interval(const ObservedData& data) {
  const auto [v1, v0] = arm_variances(data);
  // Equals sqrt((2/n)(s1^2 + s0^2)) when n1 = n0 = n/2.
  const double se = std::sqrt(v1 / data.w.treated_count() + v0 / data.w.control_count());
  return symmetric_interval(Method::Neyman, mean_difference(data), se, kNormalCritical95);
}

OlsFit ols_fit(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
               std::span<const std::string> column_names) {
  const Eigen::Index n = Z.rows();
  const Eigen::Index p = Z.cols();
  if (y.size() != n) throw DomainError("ols: outcome length does not match design rows");
  if (n <= p) {
    std::ostringstream msg;
    msg << "ols: need more observations (" << n << ") than columns (" << p << ")";
    throw DegenerateDesignError(msg.str());
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  qr.setThreshold(kRankThreshold);
  if (qr.rank() < p) {
    std::vector<int> dependent;
    for (Eigen::Index j = qr.rank(); j < p; ++j)
      dependent.push_back(static_cast<int>(qr.colsPermutation().indices()[j]));
    std::sort(dependent.begin(), dependent.end());
    std::ostringstream msg;
    msg << "ols: design is collinear; dependent column(s):";
    for (int c : dependent) {
      msg << ' ';
      if (static_cast<std::size_t>(c) < column_names.size())
        msg << column_names[static_cast<std::size_t>(c)];
      else
        msg << c;
    }
    throw CollinearityError(msg.str(), std::move(dependent));
  }
  OlsFit fit;
  fit.coefficients = qr.solve(y);
  fit.residuals = y - Z * fit.coefficients;
  const auto R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv = R.solve(Eigen::MatrixXd::Identity(p, p));
  const auto& perm = qr.colsPermutation();
  // Z P = Q R, so the thin Q is Z P R^{-1} and h_i is its squared row norm.
  const Eigen::MatrixXd q_thin = (Z * perm) * r_inv;
  fit.hat_diagonals = q_thin.rowwise().squaredNorm();
  fit.gram_inverse = perm * (r_inv * r_inv.transpose()) * perm.transpose();
  return fit;
}

namespace {

Eigen::VectorXd sandwich_weights(const OlsFit& fit, SandwichVariant variant) {
  const Eigen::ArrayXd u2 = fit.residuals.array().square();
  if (variant == SandwichVariant::EHW) return u2.matrix();
  const Eigen::ArrayXd one_minus_h = 1.0 - fit.hat_diagonals.array();
  if ((one_minus_h <= kLeverageTolerance).any())
    throw LeverageError("robust covariance: an observation has leverage 1");
  if (variant == SandwichVariant::HC2) return (u2 / one_minus_h).matrix();
  return (u2 / one_minus_h.square()).matrix();
}

}  // namespace

Eigen::MatrixXd robust_covariance(const OlsFit& fit, const Eigen::MatrixXd& Z,
                                  SandwichVariant variant) {
  if (Z.rows() != fit.residuals.size() || Z.cols() != fit.coefficients.size())
    throw DomainError("robust covariance: design does not match the fit");
  const Eigen::VectorXd weights = sandwich_weights(fit, variant);
  const Eigen::MatrixXd meat = Z.transpose() * weights.asDiagonal() * Z;
  return fit.gram_inverse * meat * fit.gram_inverse;
}

Eigen::MatrixXd adjustment_design(const ObservedData& data, bool interaction) {
  const int n = data.X.units();
  const int K = data.X.covariates();
  const int p = interaction ? 2 + 2 * K : 2 + K;
  Eigen::MatrixXd Z(n, p);
  Z.col(0).setOnes();
  for (int i = 0; i < n; ++i) Z(i, 1) = data.w.treated(i) ? 1.0 : 0.0;
  if (!interaction) {
    Z.rightCols(K) = data.X.values();
    return Z;
  }
  const Eigen::MatrixXd centered = data.X.values().rowwise() - data.X.column_means();
  Z.middleCols(2, K) = centered;
  Z.rightCols(K) = centered.array().colwise() * Z.col(1).array();
  return Z;
}

Method adjusted_method(bool interaction, SandwichVariant variant) {
  switch (variant) {
    case SandwichVariant::EHW: return interaction ? Method::IntE : Method::NointE;
    case SandwichVariant::HC2: return interaction ? Method::IntH2 : Method::NointH2;
    case SandwichVariant::HC3: return interaction ? Method::IntH3 : Method::NointH3;
  }
  return Method::NointE;
}

namespace {

struct TreatmentFit {
  OlsFit fit;
  Eigen::ArrayXd a2;  // squared entries of Z (Z'Z)^{-1} e_W
};

TreatmentFit fit_treatment_coefficient(const ObservedData& data, bool interaction) {
  const Eigen::MatrixXd Z = adjustment_design(data, interaction);
  const auto names = adjustment_column_names(data.X.covariates(), interaction);
  TreatmentFit out{ols_fit(Z, data.y, names), {}};
  // Var(b_W) = sum_i e_i^2 a_i^2, the W entry of the sandwich.
  out.a2 = (Z * out.fit.gram_inverse.col(1)).array().square();
  return out;
}

IntervalEstimate treatment_interval(const TreatmentFit& tf, bool interaction,
                                    SandwichVariant variant) {
  const Eigen::VectorXd weights = sandwich_weights(tf.fit, variant);
  const double var = (weights.array() * tf.a2).sum();
  return symmetric_interval(adjusted_method(interaction, variant), tf.fit.coefficients[1],
                            std::sqrt(var), kNormalCritical95);
}

}  // namespace

std::array<IntervalEstimate, 3> adjusted_intervals(const ObservedData& data, bool interaction) {
  const TreatmentFit tf = fit_treatment_coefficient(data, interaction);
  return {treatment_interval(tf, interaction, SandwichVariant::EHW),
          treatment_interval(tf, interaction, SandwichVariant::HC2),
          treatment_interval(tf, interaction, SandwichVariant::HC3)};
}

IntervalEstimate adjusted_interval(const ObservedData& data, bool interaction,
                                   SandwichVariant variant) {
  return treatment_interval(fit_treatment_coefficient(data, interaction), interaction, variant);
}

}  // namespace rerand
