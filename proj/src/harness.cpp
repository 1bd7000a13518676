#include "rerand/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <tuple>

namespace rerand {

namespace {

constexpr std::uint64_t kDataTag = 0;
constexpr std::uint64_t kExperimentTag = 1;
constexpr std::uint64_t kAllocationTag = 0;
constexpr std::uint64_t kNointBTag = 1;
constexpr std::uint64_t kIntBTag = 2;
constexpr std::uint64_t kLdrTag = 0x4c4452;  // "LDR"

std::uint64_t fixed_factor_tag(const FactorGrid& grid) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(grid.n));
  h = mix64(h ^ static_cast<std::uint64_t>(grid.K));
  h = mix64(h ^ static_cast<std::uint64_t>(grid.cov_dist));
  h = mix64(h ^ static_cast<std::uint64_t>(grid.dgp));
  return mix64(h ^ double_bits(grid.p_accept));
}

template <typename T>
bool all_distinct(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) == v.end();
}

std::array<int, 6> no_method(int e, int f, int g, int d) { return {-1, e, f, g, d, -1}; }

}  // namespace

void FactorGrid::validate() const {
  if (methods.empty()) throw UsageError("methods must be nonempty", "methods");
  if (!all_distinct(methods)) throw UsageError("methods must not repeat", "methods");
  if (r0_levels.empty()) throw UsageError("r0_levels must be nonempty", "r0_levels");
  for (double r : r0_levels)
    if (!(r > 0.0 && r < 1.0)) throw UsageError("r0_levels must lie in (0, 1)", "r0_levels");
  if (!all_distinct(r0_levels)) throw UsageError("r0_levels must not repeat", "r0_levels");
  if (lambda_levels.empty()) throw UsageError("lambda_levels must be nonempty", "lambda_levels");
  if (!all_distinct(lambda_levels))
    throw UsageError("lambda_levels must not repeat", "lambda_levels");
  if (c_levels.empty()) throw UsageError("c_levels must be nonempty", "c_levels");
  for (double c : c_levels)
    if (!(c >= 0.0) || !std::isfinite(c)) throw UsageError("c_levels must be >= 0", "c_levels");
  if (!all_distinct(c_levels)) throw UsageError("c_levels must not repeat", "c_levels");
  if (datasets_per_cell < 1) throw UsageError("datasets_per_cell must be positive", "datasets_per_cell");
  if (experiments_per_dataset < 1)
    throw UsageError("experiments_per_dataset must be positive", "experiments_per_dataset");
  if (n < 4 || n % 2 != 0) throw UsageError("n must be even and at least 4", "n");
  if (K < 1) throw UsageError("k must be positive", "k");
  if (!(p_accept > 0.0 && p_accept < 1.0)) throw UsageError("p_accept must lie in (0, 1)", "p_accept");
  if (max_tries < 0) throw UsageError("max_tries must be nonnegative", "max_tries");
  if (ldr_draws < 1000) throw UsageError("ldr_draws must be at least 1000", "ldr_draws");
  if (gibbs.H < 100) throw UsageError("bayes H must be at least 100", "bayes_h");
  if (gibbs.burn_in < 0) throw UsageError("bayes burn_in must be nonnegative", "bayes_burn_in");
  if (methods.size() > 0xffff || r0_levels.size() > 0xffff || c_levels.size() > 0xffff)
    throw UsageError("too many factor levels", "methods");
  try {
    prior.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what(), "prior");
  }
}

std::size_t FactorGrid::record_count() const {
  return methods.size() * r0_levels.size() * lambda_levels.size() * c_levels.size() *
         static_cast<std::size_t>(datasets_per_cell) *
         static_cast<std::size_t>(experiments_per_dataset);
}

bool record_less(const ResultRecord& a, const ResultRecord& b) {
  return std::tie(a.m, a.e, a.f, a.g, a.d, a.r) < std::tie(b.m, b.e, b.f, b.g, b.d, b.r);
}

std::vector<IntervalEstimate> evaluate_methods(const ObservedData& data,
                                               const BalanceCriterion& crit,
                                               std::span<const Method> methods,
                                               const RngStream& experiment,
                                               QuantileCache& ldr_cache,
                                               const MethodSettings& settings) {
  auto wanted = [&](Method m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  std::vector<IntervalEstimate> adjusted;
  for (bool interaction : {false, true}) {
    std::vector<SandwichVariant> variants;
    for (SandwichVariant v : {SandwichVariant::EHW, SandwichVariant::HC2, SandwichVariant::HC3})
      if (wanted(adjusted_method(interaction, v))) variants.push_back(v);
    if (variants.size() == 1) {
      adjusted.push_back(adjusted_interval(data, interaction, variants[0]));
    } else if (!variants.empty()) {
      for (const auto& est : adjusted_intervals(data, interaction))
        if (wanted(est.method)) adjusted.push_back(est);
    }
  }

  std::vector<IntervalEstimate> out;
  out.reserve(methods.size());
  for (Method m : methods) {
    switch (m) {
      case Method::Neyman:
        out.push_back(neyman_interval(data));
        break;
      case Method::NointB: {
        RngStream s = experiment.derive(kNointBTag);
        out.push_back(bayes_interval(s, data, BayesModel::NointB, settings.prior, settings.gibbs));
        break;
      }
      case Method::IntB: {
        RngStream s = experiment.derive(kIntBTag);
        out.push_back(bayes_interval(s, data, BayesModel::IntB, settings.prior, settings.gibbs));
        break;
      }
      case Method::LDR:
        out.push_back(ldr_interval(data, crit, ldr_cache));
        break;
      default:
        out.push_back(*std::find_if(adjusted.begin(), adjusted.end(),
                                    [m](const IntervalEstimate& e) { return e.method == m; }));
    }
  }
  return out;
}

RngStream unit_stream(const RngStream& master, const FactorGrid& grid, int e, int f, int g, int d) {
  return master.derive(fixed_factor_tag(grid))
      .derive(double_bits(grid.r0_levels.at(static_cast<std::size_t>(e))))
      .derive(static_cast<std::uint64_t>(grid.lambda_levels.at(static_cast<std::size_t>(f))))
      .derive(double_bits(grid.c_levels.at(static_cast<std::size_t>(g))))
      .derive(static_cast<std::uint64_t>(d));
}

RngStream ldr_stream(const RngStream& master) { return master.derive(kLdrTag); }

Dataset unit_dataset(const RngStream& master, const FactorGrid& grid, int e, int f, int g, int d) {
  DgpConfig cfg;
  cfg.dgp = grid.dgp;
  cfg.n = grid.n;
  cfg.K = grid.K;
  cfg.cov_dist = grid.cov_dist;
  cfg.r0_sq = grid.r0_levels.at(static_cast<std::size_t>(e));
  cfg.lambda_mode = grid.lambda_levels.at(static_cast<std::size_t>(f));
  cfg.c = grid.c_levels.at(static_cast<std::size_t>(g));
  return generate_dataset(unit_stream(master, grid, e, f, g, d).derive(kDataTag), cfg);
}

std::vector<ResultRecord> run_grid(const RngStream& master, const FactorGrid& grid, int workers,
                                   const ProgressFn& progress) {
  grid.validate();
  const int M = static_cast<int>(grid.methods.size());
  const int E = static_cast<int>(grid.r0_levels.size());
  const int F = static_cast<int>(grid.lambda_levels.size());
  const int G = static_cast<int>(grid.c_levels.size());
  const int D = grid.datasets_per_cell;
  const int R = grid.experiments_per_dataset;
  const std::size_t units = static_cast<std::size_t>(E) * F * G * D;
  const long max_tries = grid.max_tries > 0 ? grid.max_tries : default_max_tries(grid.p_accept);
  const MethodSettings settings{grid.prior, grid.gibbs};

  std::vector<ResultRecord> records(grid.record_count());
  QuantileCache ldr_cache(ldr_stream(master), grid.ldr_draws);

  // Unit u enumerates (e, f, g, d) with d fastest.
  auto run_unit = [&](std::size_t u) {
    const int d = static_cast<int>(u % D);
    const int g = static_cast<int>(u / D % G);
    const int f = static_cast<int>(u / D / G % F);
    const int e = static_cast<int>(u / D / G / F);
    const RngStream unit = unit_stream(master, grid, e, f, g, d);
    std::optional<Dataset> data;
    std::optional<BalanceCriterion> crit;
    std::optional<RerandomizationSampler> sampler;
    try {
      data.emplace(unit_dataset(master, grid, e, f, g, d));
      crit.emplace(build_criterion(data->X, grid.n / 2, grid.p_accept));
      sampler.emplace(data->X, *crit);
    } catch (const std::exception& ex) {
      std::ostringstream msg;
      msg << "cell (e=" << e << ", f=" << f << ", g=" << g << ") dataset " << d << ": " << ex.what();
      throw GridError(msg.str(), no_method(e, f, g, d), std::current_exception());
    }
    const RngStream experiments = unit.derive(kExperimentTag);
    for (int r = 0; r < R; ++r) {
      const RngStream exp = experiments.derive(static_cast<std::uint64_t>(r));
      std::vector<IntervalEstimate> estimates;
      try {
        RngStream alloc_stream = exp.derive(kAllocationTag);
        AcceptedAllocation acc = sampler->draw(alloc_stream, max_tries);
        Eigen::VectorXd y = observe(data->outcomes, acc.allocation);
        const ObservedData obs(data->X, std::move(acc.allocation), std::move(y));
        estimates = evaluate_methods(obs, *crit, grid.methods, exp, ldr_cache, settings);
      } catch (const std::exception& ex) {
        std::ostringstream msg;
        msg << "cell (e=" << e << ", f=" << f << ", g=" << g << ") dataset " << d
            << " experiment " << r << ": " << ex.what();
        throw GridError(msg.str(), {-1, e, f, g, d, r}, std::current_exception());
      }
      const double sate = data->outcomes.sate;
      for (int m = 0; m < M; ++m) {
        const std::size_t idx =
            ((((static_cast<std::size_t>(m) * E + e) * F + f) * G + g) * D + d) * R + r;
        ResultRecord& rec = records[idx];
        rec.m = static_cast<std::uint16_t>(m);
        rec.e = static_cast<std::uint16_t>(e);
        rec.f = static_cast<std::uint16_t>(f);
        rec.g = static_cast<std::uint16_t>(g);
        rec.d = static_cast<std::uint32_t>(d);
        rec.r = static_cast<std::uint32_t>(r);
        rec.length = estimates[static_cast<std::size_t>(m)].length();
        rec.covered = estimates[static_cast<std::size_t>(m)].covers(sate);
      }
    }
  };

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex mutex;
  auto worker = [&] {
    for (;;) {
      if (failed.load()) return;
      const std::size_t u = next.fetch_add(1);
      if (u >= units) return;
      try {
        run_unit(u);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        if (!failed.exchange(true)) first_error = std::current_exception();
        return;
      }
      const std::size_t finished = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(mutex);
        progress(finished, units);
      }
    }
  };

  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(units)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return records;
}

GridShape check_balanced(std::span<const ResultRecord> records) {
  if (records.empty()) throw BalanceError("no records");
  GridShape s;
  for (const auto& r : records) {
    s.M = std::max<int>(s.M, r.m + 1);
    s.E = std::max<int>(s.E, r.e + 1);
    s.F = std::max<int>(s.F, r.f + 1);
    s.G = std::max<int>(s.G, r.g + 1);
    s.D = std::max<int>(s.D, static_cast<int>(r.d) + 1);
    s.R = std::max<int>(s.R, static_cast<int>(r.r) + 1);
  }
  if (s.size() != records.size()) {
    std::ostringstream msg;
    msg << "records do not form a complete balanced grid: " << records.size() << " records for "
        << s.M << "x" << s.E << "x" << s.F << "x" << s.G << "x" << s.D << "x" << s.R << " levels";
    throw BalanceError(msg.str());
  }
  std::vector<bool> seen(records.size(), false);
  for (const auto& r : records) {
    const std::size_t idx =
        (((((static_cast<std::size_t>(r.m) * s.E + r.e) * s.F + r.f) * s.G + r.g) * s.D + r.d) *
         s.R) + r.r;
    if (seen[idx]) throw BalanceError("duplicate record in grid");
    seen[idx] = true;
  }
  return s;
}

AnovaTable anova(std::span<const ResultRecord> records, Metric metric) {
  const GridShape s = check_balanced(records);
  const std::size_t cells = static_cast<std::size_t>(s.M) * s.E * s.F * s.G;
  auto value = [metric](const ResultRecord& r) -> long double {
    return metric == Metric::Length ? r.length : (r.covered ? 1.0L : 0.0L);
  };
  auto cell_of = [&](const ResultRecord& r) {
    return ((static_cast<std::size_t>(r.m) * s.E + r.e) * s.F + r.f) * s.G + r.g;
  };

  std::vector<long double> dataset_sum(cells * static_cast<std::size_t>(s.D), 0.0L);
  long double grand = 0.0L;
  for (const auto& r : records) {
    const long double t = value(r);
    dataset_sum[cell_of(r) * s.D + r.d] += t;
    grand += t;
  }
  const long double N = static_cast<long double>(records.size());
  grand /= N;
  std::vector<long double> dataset_mean(dataset_sum.size());
  for (std::size_t i = 0; i < dataset_sum.size(); ++i) dataset_mean[i] = dataset_sum[i] / s.R;
  std::vector<long double> cell_mean(cells, 0.0L);
  for (std::size_t c = 0; c < cells; ++c) {
    for (int d = 0; d < s.D; ++d) cell_mean[c] += dataset_mean[c * s.D + d];
    cell_mean[c] /= s.D;
  }
  std::vector<long double> mean_m(s.M, 0.0L), mean_e(s.E, 0.0L), mean_f(s.F, 0.0L),
      mean_g(s.G, 0.0L);
  for (int m = 0; m < s.M; ++m)
    for (int e = 0; e < s.E; ++e)
      for (int f = 0; f < s.F; ++f)
        for (int g = 0; g < s.G; ++g) {
          const long double v =
              cell_mean[((static_cast<std::size_t>(m) * s.E + e) * s.F + f) * s.G + g];
          mean_m[m] += v;
          mean_e[e] += v;
          mean_f[f] += v;
          mean_g[g] += v;
        }
  for (auto& v : mean_m) v /= static_cast<long double>(s.E) * s.F * s.G;
  for (auto& v : mean_e) v /= static_cast<long double>(s.M) * s.F * s.G;
  for (auto& v : mean_f) v /= static_cast<long double>(s.M) * s.E * s.G;
  for (auto& v : mean_g) v /= static_cast<long double>(s.M) * s.E * s.F;

  auto sq = [](long double x) { return x * x; };
  const long double DR = static_cast<long double>(s.D) * s.R;
  long double ss_total = 0, ss_exp = 0;
  for (const auto& r : records) {
    const long double t = value(r);
    ss_total += sq(t - grand);
    ss_exp += sq(t - dataset_mean[cell_of(r) * s.D + r.d]);
  }
  long double ss_m = 0, ss_e = 0, ss_f = 0, ss_g = 0, ss_int = 0, ss_data = 0;
  for (long double v : mean_m) ss_m += sq(v - grand);
  for (long double v : mean_e) ss_e += sq(v - grand);
  for (long double v : mean_f) ss_f += sq(v - grand);
  for (long double v : mean_g) ss_g += sq(v - grand);
  ss_m *= static_cast<long double>(s.E) * s.F * s.G * DR;
  ss_e *= static_cast<long double>(s.M) * s.F * s.G * DR;
  ss_f *= static_cast<long double>(s.M) * s.E * s.G * DR;
  ss_g *= static_cast<long double>(s.M) * s.E * s.F * DR;
  for (int m = 0; m < s.M; ++m)
    for (int e = 0; e < s.E; ++e)
      for (int f = 0; f < s.F; ++f)
        for (int g = 0; g < s.G; ++g) {
          const std::size_t c = ((static_cast<std::size_t>(m) * s.E + e) * s.F + f) * s.G + g;
          ss_int += sq(cell_mean[c] - mean_m[m] - mean_e[e] - mean_f[f] - mean_g[g] + 3 * grand);
          for (int d = 0; d < s.D; ++d) ss_data += sq(dataset_mean[c * s.D + d] - cell_mean[c]);
        }
  ss_int *= DR;
  ss_data *= s.R;

  AnovaTable t;
  t.ss_method = static_cast<double>(ss_m);
  t.ss_e = static_cast<double>(ss_e);
  t.ss_f = static_cast<double>(ss_f);
  t.ss_g = static_cast<double>(ss_g);
  t.ss_interaction = static_cast<double>(ss_int);
  t.ss_data = static_cast<double>(ss_data);
  t.ss_experiment = static_cast<double>(ss_exp);
  t.ss_total = static_cast<double>(ss_total);
  t.degenerate = !(ss_total > 0.0L);
  if (!t.degenerate) {
    const auto comps = t.components();
    for (std::size_t i = 0; i < comps.size(); ++i) t.percentages[i] = 100.0 * comps[i] / t.ss_total;
  }
  return t;
}

namespace {

std::vector<long double> method_means(std::span<const ResultRecord> records,
                                      std::span<const Method> methods, Metric metric) {
  const GridShape s = check_balanced(records);
  if (static_cast<std::size_t>(s.M) != methods.size())
    throw BalanceError("method labels do not match the record set");
  std::vector<long double> sums(static_cast<std::size_t>(s.M), 0.0L);
  for (const auto& r : records)
    sums[r.m] += metric == Metric::Length ? r.length : (r.covered ? 1.0L : 0.0L);
  const long double per_method = static_cast<long double>(records.size()) / s.M;
  for (auto& v : sums) v /= per_method;
  return sums;
}

}  // namespace

std::vector<MainEffect> main_effects_length(std::span<const ResultRecord> records,
                                            std::span<const Method> methods) {
  const auto base = std::find(methods.begin(), methods.end(), Method::Neyman);
  if (base == methods.end()) throw BaselineError("length main effects need Neyman records");
  const auto means = method_means(records, methods, Metric::Length);
  const long double neyman = means[static_cast<std::size_t>(base - methods.begin())];
  std::vector<MainEffect> out;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    if (methods[m] == Method::Neyman) continue;
    out.push_back({methods[m], static_cast<double>(100.0L * means[m] / neyman)});
  }
  return out;
}

std::vector<MainEffect> main_effects_coverage(std::span<const ResultRecord> records,
                                              std::span<const Method> methods) {
  const auto means = method_means(records, methods, Metric::Coverage);
  std::vector<MainEffect> out;
  for (std::size_t m = 0; m < methods.size(); ++m)
    out.push_back({methods[m], static_cast<double>(100.0L * (means[m] - 0.95L))});
  return out;
}

double coverage_standard_error(long datasets, long experiments) {
  if (datasets < 1 || experiments < 1) throw DomainError("coverage SE needs positive counts");
  return 100.0 * std::sqrt(0.95 * 0.05 / (static_cast<double>(datasets) * experiments));
}

std::vector<ResultRecord> pool_records(std::span<const ResultRecord> first,
                                       std::span<const ResultRecord> second) {
  const GridShape a = check_balanced(first);
  const GridShape b = check_balanced(second);
  if (a.M != b.M || a.E != b.E || a.F != b.F || a.G != b.G || a.R != b.R)
    throw BalanceError("pooled record sets differ in factor levels");
  std::vector<ResultRecord> out(first.begin(), first.end());
  out.reserve(first.size() + second.size());
  for (ResultRecord r : second) {
    r.d += static_cast<std::uint32_t>(a.D);
    out.push_back(r);
  }
  std::sort(out.begin(), out.end(), record_less);
  return out;
}

EnumerationCheck enumeration_check(const CovariateMatrix& X, const PotentialOutcomes& po,
                                   const BalanceCriterion& crit, double max_allocations) {
  const auto set = enumerate_acceptance_set(X, crit, max_allocations);
  if (set.empty()) throw SizeError("acceptance set is empty");
  long double total = 0.0L;
  for (const Allocation& w : set) {
    long double s1 = 0.0L, s0 = 0.0L;
    for (int i = 0; i < w.units(); ++i) {
      if (w.treated(i))
        s1 += po.y1[i];
      else
        s0 += po.y0[i];
    }
    total += s1 / w.treated_count() - s0 / w.control_count();
  }
  EnumerationCheck out;
  out.set_size = set.size();
  out.mean_estimate = static_cast<double>(total / static_cast<long double>(set.size()));
  out.sate = po.sate;
  out.abs_error = std::abs(out.mean_estimate - out.sate);
  return out;
}

}  // namespace rerand
