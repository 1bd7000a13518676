#include "rerand/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "rerand/distributions.hpp"
#include "rerand/error.hpp"

namespace rerand {

CovariateMatrix::CovariateMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.rows() < 2) throw DomainError("covariate matrix needs at least 2 units");
  if (values_.cols() < 1) throw DomainError("covariate matrix needs at least 1 covariate");
  if (!values_.allFinite()) throw DomainError("covariate matrix contains non-finite values");
}

Allocation::Allocation(std::vector<std::uint8_t> indicators) : w_(std::move(indicators)) {
  for (auto v : w_) {
    if (v > 1) throw DomainError("allocation entries must be 0 or 1");
    n1_ += v;
  }
}

Allocation Allocation::from_treated(int n, std::span<const int> treated) {
  std::vector<std::uint8_t> w(static_cast<std::size_t>(n), 0);
  for (int i : treated) {
    if (i < 0 || i >= n) throw DomainError("treated index out of range");
    if (w[static_cast<std::size_t>(i)]) throw DomainError("treated index repeated");
    w[static_cast<std::size_t>(i)] = 1;
  }
  return Allocation(std::move(w));
}

Allocation Allocation::complement() const {
  std::vector<std::uint8_t> w(w_.size());
  std::transform(w_.begin(), w_.end(), w.begin(), [](std::uint8_t v) { return 1 - v; });
  return Allocation(std::move(w));
}

BalanceCriterion::BalanceCriterion(Eigen::MatrixXd sxx_factor, double threshold, int n1, int n0)
    : factor_(std::move(sxx_factor)), threshold_(threshold), n1_(n1), n0_(n0) {
  if (factor_.rows() != factor_.cols() || factor_.rows() < 1)
    throw DomainError("balance criterion: factor must be square");
  if (!(threshold_ > 0.0)) throw DomainError("balance criterion: threshold must be positive");
  if (n1_ < 1 || n0_ < 1) throw DegenerateDesignError("balance criterion: both arms need units");
  for (Eigen::Index j = 0; j < factor_.rows(); ++j)
    if (!(factor_(j, j) > 0.0)) throw SingularityError("balance criterion: factor not positive definite", {static_cast<int>(j)});
}

Eigen::MatrixXd finite_population_covariance(const CovariateMatrix& X) {
  const Eigen::MatrixXd centered = X.values().rowwise() - X.column_means();
  return (centered.transpose() * centered) / static_cast<double>(X.units() - 1);
}

Eigen::MatrixXd factor_covariance(const Eigen::MatrixXd& sxx) {
  const Eigen::Index k = sxx.rows();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(k, k);
  std::vector<int> constant, dependent;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double diag = sxx(j, j);
    double d = diag - L.row(j).head(j).squaredNorm();
    if (!(diag > 0.0)) {
      constant.push_back(static_cast<int>(j));
      continue;
    }
    if (!(d > 1e-10 * diag)) {
      dependent.push_back(static_cast<int>(j));
      continue;
    }
    L(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < k; ++i)
      L(i, j) = (sxx(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
  }
  if (!constant.empty() || !dependent.empty()) {
    std::ostringstream msg;
    msg << "covariate covariance is singular:";
    for (int c : constant) msg << " column " << c << " has zero variance;";
    for (int c : dependent) msg << " column " << c << " is linearly dependent on earlier columns;";
    std::vector<int> columns = constant;
    columns.insert(columns.end(), dependent.begin(), dependent.end());
    std::sort(columns.begin(), columns.end());
    throw SingularityError(msg.str(), std::move(columns));
  }
  return L;
}

Eigen::VectorXd covariate_mean_difference(const CovariateMatrix& X, const Allocation& w) {
  if (w.units() != X.units()) throw DomainError("allocation length does not match covariates");
  if (w.treated_count() == 0 || w.control_count() == 0)
    throw DegenerateDesignError("allocation has an empty arm");
  Eigen::VectorXd treated = Eigen::VectorXd::Zero(X.covariates());
  Eigen::VectorXd control = Eigen::VectorXd::Zero(X.covariates());
  for (int i = 0; i < X.units(); ++i) {
    if (w.treated(i))
      treated += X.values().row(i).transpose();
    else
      control += X.values().row(i).transpose();
  }
  return treated / w.treated_count() - control / w.control_count();
}

double mahalanobis(const CovariateMatrix& X, const Allocation& w, const BalanceCriterion& crit) {
  if (crit.covariates() != X.covariates())
    throw DomainError("criterion was built for a different number of covariates");
  const Eigen::VectorXd diff = covariate_mean_difference(X, w);
  const Eigen::VectorXd solved =
      crit.sxx_factor().triangularView<Eigen::Lower>().solve(diff);
  const double n = X.units();
  return (w.treated_count() * static_cast<double>(w.control_count()) / n) * solved.squaredNorm();
}

BalanceCriterion build_criterion(const CovariateMatrix& X, int n1, double p_accept) {
  if (!(p_accept > 0.0 && p_accept < 1.0))
    throw DomainError("acceptance probability must lie in (0, 1)");
  if (n1 < 1 || n1 >= X.units()) throw DegenerateDesignError("n1 must leave both arms nonempty");
  Eigen::MatrixXd L = factor_covariance(finite_population_covariance(X));
  return BalanceCriterion(std::move(L), chisq_quantile(X.covariates(), p_accept), n1,
                          X.units() - n1);
}

long default_max_tries(double p_accept) {
  if (!(p_accept > 0.0 && p_accept <= 1.0)) throw DomainError("acceptance probability must lie in (0, 1]");
  return 100L * static_cast<long>(std::ceil(1.0 / p_accept));
}

RerandomizationSampler::RerandomizationSampler(const CovariateMatrix& X,
                                               const BalanceCriterion& crit)
    : n_(X.units()),
      k_(X.covariates()),
      n1_(crit.treated_count()),
      threshold_(crit.threshold()),
      whitened_(static_cast<std::size_t>(n_) * static_cast<std::size_t>(k_)),
      order_(static_cast<std::size_t>(n_)),
      sums_(static_cast<std::size_t>(k_)) {
  if (crit.covariates() != k_) throw DomainError("criterion was built for a different number of covariates");
  if (crit.treated_count() + crit.control_count() != n_)
    throw DomainError("criterion group sizes do not match the number of units");
  scale_ = static_cast<double>(n_) / (static_cast<double>(n1_) * crit.control_count());
  const Eigen::MatrixXd centered = X.values().rowwise() - X.column_means();
  // Rows z_i = L^{-1}(x_i - xbar), stored row-major.
  const Eigen::MatrixXd z =
      crit.sxx_factor().triangularView<Eigen::Lower>().solve(centered.transpose());
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < k_; ++j) whitened_[static_cast<std::size_t>(i * k_ + j)] = z(j, i);
  std::iota(order_.begin(), order_.end(), 0);
}

double RerandomizationSampler::distance(const Allocation& w) const {
  std::vector<double> sums(static_cast<std::size_t>(k_), 0.0);
  for (int i = 0; i < n_; ++i) {
    if (!w.treated(i)) continue;
    const double* row = &whitened_[static_cast<std::size_t>(i * k_)];
    for (int j = 0; j < k_; ++j) sums[static_cast<std::size_t>(j)] += row[j];
  }
  double norm = 0.0;
  for (double s : sums) norm += s * s;
  return scale_ * norm;
}

AcceptedAllocation RerandomizationSampler::draw(RngStream& stream, long max_tries) {
  if (max_tries < 1) throw DomainError("max_tries must be >= 1");
  double smallest = std::numeric_limits<double>::infinity();
  for (long attempt = 1; attempt <= max_tries; ++attempt) {
    std::fill(sums_.begin(), sums_.end(), 0.0);
    for (int i = 0; i < n1_; ++i) {
      const auto j = static_cast<std::size_t>(i) +
                     static_cast<std::size_t>(stream.uniform_index(static_cast<std::uint64_t>(n_ - i)));
      std::swap(order_[static_cast<std::size_t>(i)], order_[j]);
      const double* row = &whitened_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)] * k_)];
      for (int c = 0; c < k_; ++c) sums_[static_cast<std::size_t>(c)] += row[c];
    }
    double norm = 0.0;
    for (double s : sums_) norm += s * s;
    const double m = scale_ * norm;
    if (m <= threshold_) {
      std::vector<std::uint8_t> w(static_cast<std::size_t>(n_), 0);
      for (int i = 0; i < n1_; ++i) w[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])] = 1;
      return {Allocation(std::move(w)), attempt, m};
    }
    smallest = std::min(smallest, m);
  }
  std::ostringstream msg;
  msg << "no allocation met the balance threshold " << threshold_ << " in " << max_tries
      << " tries (smallest distance " << smallest << ")";
  throw AcceptanceFailure(msg.str(), smallest, max_tries);
}

AcceptedAllocation draw_accepted_allocation(RngStream& stream, const CovariateMatrix& X,
                                            const BalanceCriterion& crit, long max_tries) {
  RerandomizationSampler sampler(X, crit);
  return sampler.draw(stream, max_tries);
}

double binomial_coefficient(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double result = 1.0;
  for (int i = 1; i <= k; ++i) result = result * (n - k + i) / i;
  return std::round(result);
}

std::vector<Allocation> enumerate_acceptance_set(const CovariateMatrix& X,
                                                 const BalanceCriterion& crit,
                                                 double max_allocations) {
  const int n = X.units();
  const int n1 = crit.treated_count();
  if (n1 + crit.control_count() != n)
    throw DomainError("criterion group sizes do not match the number of units");
  const double total = binomial_coefficient(n, n1);
  if (total > max_allocations) {
    std::ostringstream msg;
    msg << "acceptance set enumeration needs C(" << n << ", " << n1 << ") = " << total
        << " allocations, above the limit " << max_allocations;
    throw SizeError(msg.str());
  }
  RerandomizationSampler sampler(X, crit);
  std::vector<Allocation> accepted;
  std::vector<std::uint8_t> w(static_cast<std::size_t>(n), 0);
  // Depth-first with 0 before 1 at each position yields lexicographic order.
  auto recurse = [&](auto& self, int pos, int ones_left) -> void {
    if (pos == n) {
      Allocation candidate(w);
      if (sampler.distance(candidate) <= crit.threshold()) accepted.push_back(std::move(candidate));
      return;
    }
    if (n - pos > ones_left) {
      w[static_cast<std::size_t>(pos)] = 0;
      self(self, pos + 1, ones_left);
    }
    if (ones_left > 0) {
      w[static_cast<std::size_t>(pos)] = 1;
      self(self, pos + 1, ones_left - 1);
      w[static_cast<std::size_t>(pos)] = 0;
    }
  };
  recurse(recurse, 0, n1);
  return accepted;
}

}  // namespace rerand
