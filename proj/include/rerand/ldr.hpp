#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "rerand/design.hpp"
#include "rerand/estimators.hpp"
#include "rerand/random.hpp"

namespace rerand {

/// Plug-in inputs of the rerandomization asymptotic law sqrt(V_tau) Q.
struct AsymptoticParams {
  double v_tau_hat = 0.0;  // variance of sqrt(n) tau_hat under complete randomization
  double r2_hat = 0.0;     // clipped to [0, 1]
  int K = 1;
  double a = 0.0;          // balance threshold
};

/// Estimates V_tau and R^2 from within-arm projections of the outcomes on x.
/// Needs more than K + 1 units in each arm.
AsymptoticParams estimate_asymptotics(const ObservedData& data, double threshold);

/// Sorted draws of Q = sqrt(1 - R^2) eps0 + sqrt(R^2) L, with
/// L = sqrt(chi2_K | chi2_K <= a) * S * sqrt(beta_K).
struct QSampler {
  AsymptoticParams params;
  std::vector<double> draws;
};

/// Independent (eps0, L) pairs; the R^2-free ingredients of Q.
struct QComponents {
  std::vector<double> eps;
  std::vector<double> ell;
};

QComponents draw_q_components(RngStream& stream, int K, double a, int n_draws);

/// Draw n_draws (>= 1000) realizations of Q and sort them.
QSampler sample_q(RngStream& stream, const AsymptoticParams& params, int n_draws);

/// Interpolated order-statistic quantile; DomainError unless 0 < p < 1.
double q_quantile(const QSampler& sampler, double p);

/// Thread-safe memo of Q quantiles keyed by (K, a, R^2 rounded to `resolution`).
/// Each (K, a) gets one set of components from a stream derived from `base`,
/// so every entry is a pure function of its key and the base lineage.
class QuantileCache {
 public:
  QuantileCache(RngStream base, int n_draws, double resolution = 1e-3);

  double quantile(double r2, int K, double a, double p = 0.975);
  std::size_t size() const;
  int draws() const noexcept { return n_draws_; }
  double resolution() const noexcept { return resolution_; }

 private:
  using ComponentKey = std::pair<int, std::uint64_t>;
  using QuantileKey = std::tuple<int, std::uint64_t, long, std::uint64_t>;

  std::shared_ptr<const QComponents> components(int K, double a);

  RngStream base_;
  int n_draws_;
  double resolution_;
  mutable std::mutex mutex_;
  std::map<ComponentKey, std::shared_ptr<const QComponents>> components_;
  std::map<QuantileKey, double> quantiles_;
};

/// Interval point +- q_0.975(Q) sqrt(v_tau_hat / n), drawing a fresh Q sample.
IntervalEstimate ldr_interval(const ObservedData& data, const BalanceCriterion& crit,
                              RngStream& stream, int n_draws);

/// Same interval with the Q quantile served from a cache.
IntervalEstimate ldr_interval(const ObservedData& data, const BalanceCriterion& crit,
                              QuantileCache& cache);

}  // namespace rerand
