#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rerand/random.hpp"

namespace rerand {

/// Fixed n x K covariate design; rows are units.
class CovariateMatrix {
 public:
  explicit CovariateMatrix(Eigen::MatrixXd values);

  int units() const noexcept { return static_cast<int>(values_.rows()); }
  int covariates() const noexcept { return static_cast<int>(values_.cols()); }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  Eigen::RowVectorXd column_means() const { return values_.colwise().mean(); }

 private:
  Eigen::MatrixXd values_;
};

/// Binary treatment vector. `n1` is the number of treated units.
class Allocation {
 public:
  explicit Allocation(std::vector<std::uint8_t> indicators);
  static Allocation from_treated(int n, std::span<const int> treated);

  int units() const noexcept { return static_cast<int>(w_.size()); }
  int treated_count() const noexcept { return n1_; }
  int control_count() const noexcept { return units() - n1_; }
  bool treated(int i) const noexcept { return w_[static_cast<std::size_t>(i)] != 0; }
  std::span<const std::uint8_t> indicators() const noexcept { return w_; }
  Allocation complement() const;

  auto operator<=>(const Allocation& other) const { return w_ <=> other.w_; }
  bool operator==(const Allocation& other) const { return w_ == other.w_; }

 private:
  std::vector<std::uint8_t> w_;
  int n1_ = 0;
};

/// Acceptance rule M(w) <= threshold for a fixed covariate design.
class BalanceCriterion {
 public:
  /// `sxx_factor` is the lower Cholesky factor of the covariate covariance.
  BalanceCriterion(Eigen::MatrixXd sxx_factor, double threshold, int n1, int n0);

  const Eigen::MatrixXd& sxx_factor() const noexcept { return factor_; }
  double threshold() const noexcept { return threshold_; }
  int treated_count() const noexcept { return n1_; }
  int control_count() const noexcept { return n0_; }
  int covariates() const noexcept { return static_cast<int>(factor_.rows()); }

  BalanceCriterion with_threshold(double threshold) const {
    return BalanceCriterion(factor_, threshold, n1_, n0_);
  }

 private:
  Eigen::MatrixXd factor_;
  double threshold_;
  int n1_;
  int n0_;
};

/// S_xx = sum (x_i - xbar)(x_i - xbar)' / (n - 1).
Eigen::MatrixXd finite_population_covariance(const CovariateMatrix& X);

/// Lower Cholesky factor of a covariance matrix. Throws SingularityError naming
/// the columns that are constant or linearly dependent on earlier columns.
Eigen::MatrixXd factor_covariance(const Eigen::MatrixXd& sxx);

/// Treated-minus-control covariate means.
Eigen::VectorXd covariate_mean_difference(const CovariateMatrix& X, const Allocation& w);

/// Mahalanobis balance statistic (n1 n0 / n) d' S_xx^{-1} d for the mean
/// difference d, via two triangular solves against the stored factor.
double mahalanobis(const CovariateMatrix& X, const Allocation& w, const BalanceCriterion& crit);

/// Criterion whose threshold is the `p_accept` quantile of chi-square(K).
BalanceCriterion build_criterion(const CovariateMatrix& X, int n1, double p_accept);

/// Default retry budget 100 * ceil(1 / p_accept).
long default_max_tries(double p_accept);

struct AcceptedAllocation {
  Allocation allocation;
  long tries;
  double distance;
};

/// Reusable rejection sampler for one design. Draws uniform allocations with
/// exactly n1 treated (partial Fisher-Yates) until M <= threshold.
class RerandomizationSampler {
 public:
  RerandomizationSampler(const CovariateMatrix& X, const BalanceCriterion& crit);

  AcceptedAllocation draw(RngStream& stream, long max_tries);
  /// Balance statistic from the whitened copy; equals `mahalanobis`.
  double distance(const Allocation& w) const;

 private:
  int n_;
  int k_;
  int n1_;
  double threshold_;
  double scale_;
  std::vector<double> whitened_;  // row-major n x K, centered and whitened
  std::vector<int> order_;
  std::vector<double> sums_;
};

AcceptedAllocation draw_accepted_allocation(RngStream& stream, const CovariateMatrix& X,
                                            const BalanceCriterion& crit, long max_tries);

/// Every allocation with M <= threshold, in lexicographic order of w.
/// Guarded to C(n, n1) <= max_allocations.
std::vector<Allocation> enumerate_acceptance_set(const CovariateMatrix& X,
                                                 const BalanceCriterion& crit,
                                                 double max_allocations = 1e6);

/// C(n, k) as a double.
double binomial_coefficient(int n, int k);

}  // namespace rerand
