#include "rerand/ldr.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rerand/distributions.hpp"
#include "rerand/error.hpp"

namespace rerand {

namespace {

// Fitted values at all n units from a regression of arm-`treated` outcomes on [1, x].
Eigen::VectorXd arm_projection(const ObservedData& data, bool treated) {
  const int n = data.X.units();
  const int K = data.X.covariates();
  const int count = treated ? data.w.treated_count() : data.w.control_count();
  if (count <= K + 1) {
    std::ostringstream msg;
    msg << "asymptotic estimation: " << (treated ? "treated" : "control") << " arm has " << count
        << " units, needs more than K + 1 = " << K + 1;
    throw DegenerateDesignError(msg.str());
  }
  Eigen::MatrixXd Z(count, K + 1);
  Eigen::VectorXd y(count);
  for (int i = 0, row = 0; i < n; ++i) {
    if (data.w.treated(i) != treated) continue;
    Z(row, 0) = 1.0;
    Z.row(row).tail(K) = data.X.values().row(i);
    y[row] = data.y[i];
    ++row;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  qr.setThreshold(1e-10);
  if (qr.rank() < K + 1)
    throw CollinearityError("asymptotic estimation: covariates are collinear within an arm", {});
  const Eigen::VectorXd b = qr.solve(y);
  return (data.X.values() * b.tail(K)).array() + b[0];
}

double finite_population_variance(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

AsymptoticParams estimate_asymptotics(const ObservedData& data, double threshold) {
  const double n = data.X.units();
  const double n1 = data.w.treated_count();
  const double n0 = data.w.control_count();
  const auto [s1, s0] = arm_variances(data);
  const Eigen::VectorXd fit1 = arm_projection(data, true);
  const Eigen::VectorXd fit0 = arm_projection(data, false);
  const double proj1 = finite_population_variance(fit1);
  const double proj0 = finite_population_variance(fit0);
  const double proj_tau = finite_population_variance(fit1 - fit0);

  AsymptoticParams params;
  params.K = data.X.covariates();
  params.a = threshold;
  const double floor = 1e-12 * (1.0 + s1 + s0);
  params.v_tau_hat = std::max((n / n1) * s1 + (n / n0) * s0 - proj_tau, floor);
  const double explained = (n / n1) * proj1 + (n / n0) * proj0 - proj_tau;
  params.r2_hat = std::clamp(explained / params.v_tau_hat, 0.0, 1.0);
  return params;
}

QComponents draw_q_components(RngStream& stream, int K, double a, int n_draws) {
  const TruncatedChiSqSpec spec(K, a);
  QComponents out;
  out.eps.resize(static_cast<std::size_t>(n_draws));
  out.ell.resize(static_cast<std::size_t>(n_draws));
  for (std::size_t i = 0; i < out.eps.size(); ++i) {
    out.eps[i] = stream.normal();
    const double radius = std::sqrt(sample_truncated_chisq(stream, spec));
    const double sign = sample_standard(stream, StandardDist::Rademacher);
    out.ell[i] = radius * sign * std::sqrt(sample_beta_half(stream, K));
  }
  return out;
}

namespace {

std::vector<double> combine(const QComponents& c, double r2) {
  const double w_eps = std::sqrt(1.0 - r2);
  const double w_ell = std::sqrt(r2);
  std::vector<double> q(c.eps.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = w_eps * c.eps[i] + w_ell * c.ell[i];
  return q;
}

}  // namespace

QSampler sample_q(RngStream& stream, const AsymptoticParams& params, int n_draws) {
  if (n_draws < 1000) throw SizeError("sample_q needs at least 1000 draws");
  if (!(params.r2_hat >= 0.0 && params.r2_hat <= 1.0))
    throw DomainError("sample_q: R^2 must lie in [0, 1]");
  const QComponents comps = draw_q_components(stream, params.K, params.a, n_draws);
  QSampler out{params, combine(comps, params.r2_hat)};
  std::sort(out.draws.begin(), out.draws.end());
  return out;
}

double q_quantile(const QSampler& sampler, double p) { return sorted_quantile(sampler.draws, p); }

QuantileCache::QuantileCache(RngStream base, int n_draws, double resolution)
    : base_(std::move(base)), n_draws_(n_draws), resolution_(resolution) {
  if (n_draws < 1000) throw SizeError("quantile cache needs at least 1000 draws");
  if (!(resolution > 0.0 && resolution <= 1.0))
    throw DomainError("quantile cache resolution must lie in (0, 1]");
}

std::shared_ptr<const QComponents> QuantileCache::components(int K, double a) {
  const ComponentKey key{K, double_bits(a)};
  if (auto it = components_.find(key); it != components_.end()) return it->second;
  RngStream stream = base_.derive(static_cast<std::uint64_t>(K)).derive(double_bits(a));
  auto comps = std::make_shared<const QComponents>(draw_q_components(stream, K, a, n_draws_));
  components_.emplace(key, comps);
  return comps;
}

double QuantileCache::quantile(double r2, int K, double a, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile: p must lie in (0, 1)");
  const long step = std::lround(std::clamp(r2, 0.0, 1.0) / resolution_);
  const QuantileKey key{K, double_bits(a), step, double_bits(p)};
  std::lock_guard<std::mutex> lock(mutex_);
  if (auto it = quantiles_.find(key); it != quantiles_.end()) return it->second;
  const auto comps = components(K, a);
  std::vector<double> q = combine(*comps, std::min(1.0, static_cast<double>(step) * resolution_));
  const double pos = (static_cast<double>(q.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  std::nth_element(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(lo), q.end());
  const double low_value = q[lo];
  double high_value = low_value;
  if (lo + 1 < q.size())
    high_value = *std::min_element(q.begin() + static_cast<std::ptrdiff_t>(lo) + 1, q.end());
  const double value = low_value + (pos - static_cast<double>(lo)) * (high_value - low_value);
  quantiles_.emplace(key, value);
  return value;
}

std::size_t QuantileCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return quantiles_.size();
}

namespace {

IntervalEstimate ldr_from_quantile(const ObservedData& data, const AsymptoticParams& params,
                                   double q975) {
  IntervalEstimate est;
  est.method = Method::LDR;
  est.point = mean_difference(data);
  est.se = std::sqrt(params.v_tau_hat / data.X.units());
  est.critical_value = q975;
  est.lower = est.point - q975 * *est.se;
  est.upper = est.point + q975 * *est.se;
  return est;
}

}  // namespace

IntervalEstimate ldr_interval(const ObservedData& data, const BalanceCriterion& crit,
                              RngStream& stream, int n_draws) {
  const AsymptoticParams params = estimate_asymptotics(data, crit.threshold());
  const QSampler sampler = sample_q(stream, params, n_draws);
  return ldr_from_quantile(data, params, q_quantile(sampler, 0.975));
}

IntervalEstimate ldr_interval(const ObservedData& data, const BalanceCriterion& crit,
                              QuantileCache& cache) {
  const AsymptoticParams params = estimate_asymptotics(data, crit.threshold());
  return ldr_from_quantile(data, params, cache.quantile(params.r2_hat, params.K, params.a));
}

}  // namespace rerand
