#pragma once

#include <span>

#include "rerand/random.hpp"

namespace rerand {

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double regularized_gamma_q(double a, double x);

/// CDF of the chi-square distribution with `dof` degrees of freedom.
double chisq_cdf(int dof, double x);

/// Inverse chi-square CDF. Throws DomainError unless 0 < p < 1.
double chisq_quantile(int dof, double p);

/// Chi-square with `dof` degrees of freedom conditioned on being <= `bound`.
class TruncatedChiSqSpec {
 public:
  TruncatedChiSqSpec(int dof, double bound);

  int dof() const noexcept { return dof_; }
  double bound() const noexcept { return bound_; }
  /// Untruncated probability of the retained region, CDF(bound).
  double mass() const noexcept { return mass_; }
  /// CDF of the truncated law.
  double cdf(double x) const;

 private:
  int dof_;
  double bound_;
  double mass_;
};

/// One truncated chi-square draw by inversion: u ~ U(0, CDF(a)), return quantile(u).
double sample_truncated_chisq(RngStream& stream, const TruncatedChiSqSpec& spec);

/// Beta(1/2, (K-1)/2) draw; exactly 1 for K = 1.
double sample_beta_half(RngStream& stream, int K);

/// Gamma(shape, rate = 1) draw (Marsaglia-Tsang).
double sample_gamma(RngStream& stream, double shape);

/// X with 1/X ~ Gamma(shape, rate = scale); density proportional to
/// x^(-shape-1) exp(-scale/x).
double sample_inverse_gamma(RngStream& stream, double shape, double scale);

enum class StandardDist { Normal01, Exp1Centered, Exp1, Rademacher };

double sample_standard(RngStream& stream, StandardDist dist);

/// Quantile of an ascending sample by linear interpolation between adjacent
/// order statistics at position (N - 1) p. Throws DomainError unless 0 < p < 1.
double sorted_quantile(std::span<const double> sorted, double p);

}  // namespace rerand
