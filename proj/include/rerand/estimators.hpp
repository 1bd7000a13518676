#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "rerand/design.hpp"

namespace rerand {

/// The ten inference methods, in reporting order.
enum class Method { Neyman, NointE, IntE, NointH2, IntH2, NointH3, IntH3, NointB, IntB, LDR };

inline constexpr std::array<Method, 10> kAllMethods = {
    Method::Neyman, Method::NointE, Method::IntE,  Method::NointH2, Method::IntH2,
    Method::NointH3, Method::IntH3, Method::NointB, Method::IntB,    Method::LDR};

std::string_view to_string(Method method);
/// Parses a method label; throws UsageError on unknown names.
Method parse_method(std::string_view label);
bool is_bayesian(Method method);

/// Point estimate and 95% interval for the sample average treatment effect.
struct IntervalEstimate {
  Method method = Method::Neyman;
  double point = 0.0;
  std::optional<double> se;
  double lower = 0.0;
  double upper = 0.0;
  /// Multiplier applied to `se` (1.96, or the Q quantile for LDR).
  std::optional<double> critical_value;

  double length() const noexcept { return upper - lower; }
  bool covers(double value) const noexcept { return lower <= value && value <= upper; }
};

inline constexpr double kNormalCritical95 = 1.96;

/// Covariates, realized allocation and observed outcomes of one experiment.
struct ObservedData {
  ObservedData(CovariateMatrix X, Allocation w, Eigen::VectorXd y_obs);

  CovariateMatrix X;
  Allocation w;
  Eigen::VectorXd y;
};

/// Ybar_1 - Ybar_0.
double mean_difference(const ObservedData& data);

/// Within-arm sample variances (divisor n_w - 1) as {s1^2, s0^2}.
std::array<double, 2> arm_variances(const ObservedData& data);

/// Difference in means with the conservative Neyman standard error.
IntervalEstimate neyman_interval(const ObservedData& data);

struct OlsFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd residuals;
  Eigen::VectorXd hat_diagonals;
  Eigen::MatrixXd gram_inverse;  // (Z'Z)^{-1}
};

/// Least squares through a column-pivoting QR. Throws CollinearityError when a
/// pivot decays below 1e-10 relative to the first; `column_names` label the
/// offending columns in the message when given.
OlsFit ols_fit(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
               std::span<const std::string> column_names = {});

enum class SandwichVariant { EHW, HC2, HC3 };

std::string_view to_string(SandwichVariant variant);

/// (Z'Z)^{-1} (sum e_i^2 z_i z_i') (Z'Z)^{-1} with e_i = u_i, u_i/sqrt(1-h_i)
/// or u_i/(1-h_i). No leading factor n: the diagonal holds squared standard
/// errors of the coefficients.
Eigen::MatrixXd robust_covariance(const OlsFit& fit, const Eigen::MatrixXd& Z,
                                  SandwichVariant variant);

/// Regression design used by the OLS adjustments: [1, W, x] without
/// interactions, [1, W, x - xbar, W (x - xbar)] with them. Column 1 is W.
Eigen::MatrixXd adjustment_design(const ObservedData& data, bool interaction);

/// Coefficient on W with a robust standard error.
IntervalEstimate adjusted_interval(const ObservedData& data, bool interaction,
                                   SandwichVariant variant);

/// All three sandwich variants from one fit, ordered EHW, HC2, HC3.
std::array<IntervalEstimate, 3> adjusted_intervals(const ObservedData& data, bool interaction);

Method adjusted_method(bool interaction, SandwichVariant variant);

}  // namespace rerand
