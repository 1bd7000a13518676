#pragma once

#include <array>
#include <cstdint>
#include <exception>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rerand/bayes.hpp"
#include "rerand/design.hpp"
#include "rerand/dgp.hpp"
#include "rerand/error.hpp"
#include "rerand/estimators.hpp"
#include "rerand/ldr.hpp"
#include "rerand/random.hpp"

namespace rerand {

struct FactorGrid {
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  std::vector<double> r0_levels{0.2, 0.5};
  std::vector<LambdaMode> lambda_levels{LambdaMode::Zero, LambdaMode::Scaled};
  std::vector<double> c_levels{0.0, 0.01, 0.1, 0.25, 0.5};
  int datasets_per_cell = 10;
  int experiments_per_dataset = 500;

  int n = 50;
  int K = 3;
  CovDist cov_dist = CovDist::Normal01;
  DgpKind dgp = DgpKind::DGP1;

  double p_accept = 0.01;
  long max_tries = 0;  // 0 selects default_max_tries(p_accept)
  int ldr_draws = 100000;
  PriorSpec prior;
  GibbsOptions gibbs;

  /// Throws UsageError naming the offending field.
  void validate() const;
  std::size_t record_count() const;
};

/// One (method, cell, dataset, experiment) outcome.
struct ResultRecord {
  std::uint16_t m = 0, e = 0, f = 0, g = 0;
  std::uint32_t d = 0, r = 0;
  double length = 0.0;
  bool covered = false;

  bool operator==(const ResultRecord&) const = default;
};

bool record_less(const ResultRecord& a, const ResultRecord& b);

/// A method or design failure inside run_grid, tagged with its indices.
class GridError : public Error {
 public:
  GridError(const std::string& what, std::array<int, 6> indices, std::exception_ptr cause)
      : Error(what), indices_(indices), cause_(std::move(cause)) {}
  /// {m, e, f, g, d, r}; m and r are -1 when the failure precedes method evaluation.
  const std::array<int, 6>& indices() const noexcept { return indices_; }
  std::exception_ptr cause() const noexcept { return cause_; }

 private:
  std::array<int, 6> indices_;
  std::exception_ptr cause_;
};

/// Settings shared by every experiment in a run.
struct MethodSettings {
  PriorSpec prior;
  GibbsOptions gibbs;
};

/// Evaluates `methods` on one experiment. Every method sees the same data.
/// Bayesian chains use experiment.derive(1) (NointB) and experiment.derive(2) (IntB).
std::vector<IntervalEstimate> evaluate_methods(const ObservedData& data,
                                               const BalanceCriterion& crit,
                                               std::span<const Method> methods,
                                               const RngStream& experiment,
                                               QuantileCache& ldr_cache,
                                               const MethodSettings& settings);

/// Stream of dataset d in cell (e, f, g); depends only on level values.
RngStream unit_stream(const RngStream& master, const FactorGrid& grid, int e, int f, int g, int d);

/// Base stream of the LDR quantile cache.
RngStream ldr_stream(const RngStream& master);

/// Dataset of one unit, as run_grid generates it.
Dataset unit_dataset(const RngStream& master, const FactorGrid& grid, int e, int f, int g, int d);

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs the full factorial study. Records come back ordered by (m, e, f, g, d, r)
/// and do not depend on `workers`.
std::vector<ResultRecord> run_grid(const RngStream& master, const FactorGrid& grid, int workers,
                                   const ProgressFn& progress = {});

enum class Metric { Length, Coverage };

struct AnovaTable {
  double ss_method = 0, ss_e = 0, ss_f = 0, ss_g = 0;
  double ss_interaction = 0, ss_data = 0, ss_experiment = 0, ss_total = 0;
  /// Shares of ss_total in the order method, e, f, g, interaction, data, experiment.
  std::array<double, 7> percentages{};
  /// ss_total is zero; percentages are reported as 0.
  bool degenerate = false;

  std::array<double, 7> components() const {
    return {ss_method, ss_e, ss_f, ss_g, ss_interaction, ss_data, ss_experiment};
  }
};

inline constexpr std::array<const char*, 7> kAnovaSources = {
    "method", "r0_sq", "lambda", "c", "interaction", "data", "experiment"};

struct GridShape {
  int M = 0, E = 0, F = 0, G = 0, D = 0, R = 0;
  std::size_t size() const {
    return static_cast<std::size_t>(M) * E * F * G * D * R;
  }
};

/// Shape of a complete balanced record set; throws BalanceError otherwise.
GridShape check_balanced(std::span<const ResultRecord> records);

AnovaTable anova(std::span<const ResultRecord> records, Metric metric);

struct MainEffect {
  Method method;
  double value;
};

/// 100 Lbar_m / Lbar_Neyman for every method other than Neyman.
std::vector<MainEffect> main_effects_length(std::span<const ResultRecord> records,
                                            std::span<const Method> methods);

/// 100 (Cbar_m - 0.95) for every method.
std::vector<MainEffect> main_effects_coverage(std::span<const ResultRecord> records,
                                              std::span<const Method> methods);

/// Monte Carlo standard error, in percentage points, of a coverage main effect
/// estimated from D R experiments at nominal 95%.
double coverage_standard_error(long datasets, long experiments);

/// Concatenates two record sets over the same factor levels, shifting the
/// dataset index of the second by the first's D.
std::vector<ResultRecord> pool_records(std::span<const ResultRecord> first,
                                       std::span<const ResultRecord> second);

struct EnumerationCheck {
  std::size_t set_size = 0;
  double mean_estimate = 0.0;
  double sate = 0.0;
  double abs_error = 0.0;
};

/// Averages the difference in means over the whole acceptance set.
EnumerationCheck enumeration_check(const CovariateMatrix& X, const PotentialOutcomes& po,
                                   const BalanceCriterion& crit, double max_allocations = 1e6);

}  // namespace rerand
