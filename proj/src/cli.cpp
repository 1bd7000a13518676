#include "rerand/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "rerand/error.hpp"
#include "rerand/report.hpp"

namespace rerand {

namespace {

using nlohmann::json;

constexpr std::uint64_t kAnalyzeTag = 0x414e414c;  // "ANAL"

int default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Simulate: return "simulate";
    case Mode::Analyze: return "analyze";
    case Mode::Enumerate: return "enumerate";
  }
  return "?";
}

std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::Desk: return "desk";
    case Preset::Paper: return "paper";
    case Preset::Custom: return "custom";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "simulate") return Mode::Simulate;
  if (s == "analyze") return Mode::Analyze;
  if (s == "enumerate") return Mode::Enumerate;
  throw UsageError("unknown mode '" + s + "' (simulate|analyze|enumerate)", "mode");
}

Preset parse_preset(const std::string& s) {
  if (s == "desk") return Preset::Desk;
  if (s == "paper") return Preset::Paper;
  if (s == "custom") return Preset::Custom;
  throw UsageError("unknown preset '" + s + "' (desk|paper|custom)", "preset");
}

// Typed accessors that name the key on mismatch.
template <typename T>
T get_as(const json& doc, const std::string& key) {
  const json& v = doc.at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::invalid_argument("bool");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw std::invalid_argument("int");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<std::int64_t>() < 0) throw std::invalid_argument("negative");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw std::invalid_argument("number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw std::invalid_argument("string");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' has the wrong type: " + v.dump(), key);
  }
}

template <typename T>
std::vector<T> get_list(const json& doc, const std::string& key) {
  const json& v = doc.at(key);
  if (!v.is_array()) throw UsageError("config key '" + key + "' must be a list", key);
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    json wrapper = {{key, v[i]}};
    out.push_back(get_as<T>(wrapper, key));
  }
  return out;
}

void check_range(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw UsageError("config key '" + key + "' " + what, key);
}

json prior_to_json(const PriorSpec& p) {
  return {{"coef_sd", p.coef_sd}, {"var_shape", p.var_shape}, {"var_scale", p.var_scale}};
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "seed",       "workers",          "preset",          "out_dir",       "mode",
      "input",      "save_datasets",    "quiet",           "methods",       "r0_levels",
      "lambda_levels", "c_levels",      "datasets_per_cell", "experiments_per_dataset",
      "n",          "k",                "cov_dist",        "dgp",           "p_accept",
      "max_tries",  "ldr_draws",        "bayes_h",         "bayes_burn_in", "prior"};
  return keys;
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw UsageError("configuration must be a JSON object", "config");
  const auto& keys = config_keys();
  for (const auto& [key, value] : doc.items())
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw UsageError("unknown config key '" + key + "'", key);

  RunConfig cfg;
  if (!doc.contains("seed")) throw UsageError("config key 'seed' is required", "seed");
  cfg.seed = get_as<std::uint64_t>(doc, "seed");
  cfg.workers = doc.contains("workers") ? get_as<int>(doc, "workers") : default_workers();
  check_range(cfg.workers >= 1, "workers", "must be at least 1");
  if (doc.contains("preset")) cfg.preset = parse_preset(get_as<std::string>(doc, "preset"));
  if (cfg.preset == Preset::Paper) {
    cfg.grid.datasets_per_cell = 20;
    cfg.grid.experiments_per_dataset = 2000;
  } else {
    cfg.grid.datasets_per_cell = 10;
    cfg.grid.experiments_per_dataset = 500;
  }
  cfg.grid.gibbs.H = 2000;
  cfg.grid.gibbs.burn_in = 500;

  if (doc.contains("out_dir")) cfg.out_dir = get_as<std::string>(doc, "out_dir");
  check_range(!cfg.out_dir.empty(), "out_dir", "must be nonempty");
  if (doc.contains("mode")) cfg.mode = parse_mode(get_as<std::string>(doc, "mode"));
  if (doc.contains("input")) cfg.input = get_as<std::string>(doc, "input");
  if (doc.contains("save_datasets")) cfg.save_datasets = get_as<bool>(doc, "save_datasets");
  if (doc.contains("quiet")) cfg.quiet = get_as<bool>(doc, "quiet");

  FactorGrid& g = cfg.grid;
  if (doc.contains("methods")) {
    g.methods.clear();
    for (const auto& label : get_list<std::string>(doc, "methods")) g.methods.push_back(parse_method(label));
  }
  if (doc.contains("r0_levels")) g.r0_levels = get_list<double>(doc, "r0_levels");
  if (doc.contains("lambda_levels")) {
    g.lambda_levels.clear();
    for (const auto& label : get_list<std::string>(doc, "lambda_levels"))
      g.lambda_levels.push_back(parse_lambda_mode(label));
  }
  if (doc.contains("c_levels")) g.c_levels = get_list<double>(doc, "c_levels");
  if (doc.contains("datasets_per_cell")) g.datasets_per_cell = get_as<int>(doc, "datasets_per_cell");
  if (doc.contains("experiments_per_dataset"))
    g.experiments_per_dataset = get_as<int>(doc, "experiments_per_dataset");
  if (doc.contains("n")) g.n = get_as<int>(doc, "n");
  if (doc.contains("k")) g.K = get_as<int>(doc, "k");
  if (doc.contains("cov_dist")) g.cov_dist = parse_cov_dist(get_as<std::string>(doc, "cov_dist"));
  if (doc.contains("dgp")) {
    const auto label = get_as<std::string>(doc, "dgp");
    if (label == "both") {
      cfg.both_dgps = true;
      g.dgp = DgpKind::DGP1;
    } else {
      g.dgp = parse_dgp(label);
    }
  }
  if (doc.contains("p_accept")) g.p_accept = get_as<double>(doc, "p_accept");
  if (doc.contains("max_tries")) g.max_tries = get_as<long>(doc, "max_tries");
  if (doc.contains("ldr_draws")) g.ldr_draws = get_as<int>(doc, "ldr_draws");
  if (doc.contains("bayes_h")) g.gibbs.H = get_as<int>(doc, "bayes_h");
  if (doc.contains("bayes_burn_in")) g.gibbs.burn_in = get_as<int>(doc, "bayes_burn_in");
  if (doc.contains("prior")) {
    const json& p = doc.at("prior");
    if (!p.is_object()) throw UsageError("config key 'prior' must be an object", "prior");
    for (const auto& [key, value] : p.items()) {
      if (key == "coef_sd") g.prior.coef_sd = get_as<double>(p, key);
      else if (key == "var_shape") g.prior.var_shape = get_as<double>(p, key);
      else if (key == "var_scale") g.prior.var_scale = get_as<double>(p, key);
      else throw UsageError("unknown config key 'prior." + key + "'", "prior." + key);
    }
  }
  g.validate();
  if (cfg.mode == Mode::Analyze && cfg.input.empty())
    throw UsageError("analyze mode needs 'input'", "input");
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  const FactorGrid& g = cfg.grid;
  json methods = json::array();
  for (Method m : g.methods) methods.push_back(std::string(to_string(m)));
  json lambdas = json::array();
  for (LambdaMode l : g.lambda_levels) lambdas.push_back(std::string(to_string(l)));
  return {{"seed", cfg.seed},
          {"preset", std::string(to_string(cfg.preset))},
          {"mode", std::string(to_string(cfg.mode))},
          {"input", cfg.input},
          {"save_datasets", cfg.save_datasets},
          {"methods", methods},
          {"r0_levels", g.r0_levels},
          {"lambda_levels", lambdas},
          {"c_levels", g.c_levels},
          {"datasets_per_cell", g.datasets_per_cell},
          {"experiments_per_dataset", g.experiments_per_dataset},
          {"n", g.n},
          {"k", g.K},
          {"cov_dist", std::string(to_string(g.cov_dist))},
          {"dgp", cfg.both_dgps ? std::string("both") : std::string(to_string(g.dgp))},
          {"p_accept", g.p_accept},
          {"max_tries", g.max_tries},
          {"ldr_draws", g.ldr_draws},
          {"bayes_h", g.gibbs.H},
          {"bayes_burn_in", g.gibbs.burn_in},
          {"prior", prior_to_json(g.prior)}};
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  return hash_bytes(text.data(), text.size());
}

bool RunConfig::operator==(const RunConfig& other) const {
  return config_to_json(*this) == config_to_json(other) && workers == other.workers &&
         out_dir == other.out_dir && quiet == other.quiet;
}

RunConfig parse_args(int argc, const char* const* argv) {
  CLI::App app{"Rerandomization inference and Monte Carlo harness", "rerand"};
  std::string config_path, preset, out, mode, dgp, cov_dist, input, methods;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers, n, k, datasets, experiments, bayes_h;
  bool save_datasets = false, quiet = false;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--seed", seed, "Master seed (required unless given in the config)");
  app.add_option("--workers", workers, "Worker threads");
  app.add_option("--preset", preset, "desk | paper | custom");
  app.add_option("--out", out, "Output directory for simulate mode");
  app.add_option("--mode", mode, "simulate | analyze | enumerate");
  app.add_option("--n", n, "Number of units");
  app.add_option("--k", k, "Number of covariates");
  app.add_option("--dgp", dgp, "DGP1 | DGP2 | both");
  app.add_option("--cov-dist", cov_dist, "normal01 | exp1");
  app.add_option("--input", input, "Input file for analyze / enumerate");
  app.add_option("--datasets", datasets, "Datasets per cell (D)");
  app.add_option("--experiments", experiments, "Experiments per dataset (R)");
  app.add_option("--methods", methods, "Comma-separated method labels");
  app.add_option("--bayes-h", bayes_h, "Kept Gibbs draws per chain");
  app.add_flag("--save-datasets", save_datasets, "Write each generated dataset");
  app.add_flag("--quiet", quiet, "Suppress the progress line");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what(), "flags");
  }

  json doc = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot open config file '" + config_path + "'", "config");
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError("config file '" + config_path + "' is not valid JSON: " + e.what(), "config");
    }
  }
  if (seed) doc["seed"] = *seed;
  if (workers) doc["workers"] = *workers;
  if (!preset.empty()) doc["preset"] = preset;
  if (!out.empty()) doc["out_dir"] = out;
  if (!mode.empty()) doc["mode"] = mode;
  if (n) doc["n"] = *n;
  if (k) doc["k"] = *k;
  if (!dgp.empty()) doc["dgp"] = dgp;
  if (!cov_dist.empty()) doc["cov_dist"] = cov_dist;
  if (!input.empty()) doc["input"] = input;
  if (datasets) doc["datasets_per_cell"] = *datasets;
  if (experiments) doc["experiments_per_dataset"] = *experiments;
  if (bayes_h) doc["bayes_h"] = *bayes_h;
  if (save_datasets) doc["save_datasets"] = true;
  if (quiet) doc["quiet"] = true;
  if (!methods.empty()) {
    json list = json::array();
    std::stringstream ss(methods);
    std::string label;
    while (std::getline(ss, label, ',')) list.push_back(label);
    doc["methods"] = list;
  }
  return parse_config(doc);
}

namespace {

void write_datasets(const RunConfig& cfg, const FactorGrid& grid, const RngStream& master,
                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t e = 0; e < grid.r0_levels.size(); ++e)
    for (std::size_t f = 0; f < grid.lambda_levels.size(); ++f)
      for (std::size_t g = 0; g < grid.c_levels.size(); ++g)
        for (int d = 0; d < grid.datasets_per_cell; ++d) {
          const Dataset data = unit_dataset(master, grid, static_cast<int>(e), static_cast<int>(f),
                                            static_cast<int>(g), d);
          std::ostringstream name;
          name << to_string(grid.dgp) << "_e" << e << "_f" << f << "_g" << g << "_d" << d << ".csv";
          std::ofstream out(dir / name.str());
          out << provenance_line(cfg.seed, config_hash(cfg)) << '\n';
          write_dataset(out, data);
        }
}

std::vector<ResultRecord> simulate_one(const RunConfig& cfg, const FactorGrid& grid,
                                       const std::filesystem::path& csv_path, std::ostream& err) {
  const RngStream master(cfg.seed);
  std::size_t last_tick = 0;
  ProgressFn progress;
  if (!cfg.quiet) {
    progress = [&](std::size_t done, std::size_t total) {
      const std::size_t tick = done * 20 / total;
      if (tick != last_tick || done == total) {
        last_tick = tick;
        err << "\r" << to_string(grid.dgp) << ": " << done << "/" << total << " datasets"
            << (done == total ? "\n" : "") << std::flush;
      }
    };
  }
  auto records = run_grid(master, grid, cfg.workers, progress);
  std::ofstream out(csv_path);
  if (!out) throw UsageError("cannot write '" + csv_path.string() + "'", "out_dir");
  write_results_csv(out, records, grid.methods, provenance_line(cfg.seed, config_hash(cfg)));
  if (cfg.save_datasets) write_datasets(cfg, grid, master, csv_path.parent_path() / "datasets");
  return records;
}

int run_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  json summary;
  if (!cfg.both_dgps) {
    const auto records = simulate_one(cfg, cfg.grid, dir / "results.csv", err);
    summary = summarize(records, cfg.grid.methods);
  } else {
    FactorGrid g1 = cfg.grid, g2 = cfg.grid;
    g1.dgp = DgpKind::DGP1;
    g2.dgp = DgpKind::DGP2;
    const auto r1 = simulate_one(cfg, g1, dir / "results_DGP1.csv", err);
    const auto r2 = simulate_one(cfg, g2, dir / "results_DGP2.csv", err);
    summary = summarize(pool_records(r1, r2), cfg.grid.methods);
    summary["pooled"] = true;
    summary["by_dgp"] = {{"DGP1", summarize(r1, cfg.grid.methods)},
                         {"DGP2", summarize(r2, cfg.grid.methods)}};
  }
  summary["grid"] = config_to_json(cfg);
  summary["seed"] = cfg.seed;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  summary["config_hash"] = hash;
  summary["coverage_mc_se_pp"] =
      coverage_standard_error(cfg.grid.datasets_per_cell, cfg.grid.experiments_per_dataset);
  std::ofstream js(dir / "summary.json");
  js << summary.dump(2) << '\n';
  out << "wrote " << (dir / "summary.json").string() << '\n';
  return 0;
}

int run_analyze(const RunConfig& cfg, std::ostream& out) {
  std::ifstream in(cfg.input);
  if (!in) throw UsageError("cannot open input '" + cfg.input + "'", "input");
  const AnalyzeInput parsed = read_observed_csv(in);
  const ObservedData& data = parsed.data;
  double p_accept = cfg.grid.p_accept;
  if (auto it = parsed.header.find("p_accept"); it != parsed.header.end()) p_accept = std::stod(it->second);
  const BalanceCriterion crit = build_criterion(data.X, data.w.treated_count(), p_accept);
  const RngStream master(cfg.seed);
  QuantileCache cache(ldr_stream(master), cfg.grid.ldr_draws);
  const auto estimates = evaluate_methods(data, crit, cfg.grid.methods, master.derive(kAnalyzeTag),
                                          cache, MethodSettings{cfg.grid.prior, cfg.grid.gibbs});
  json intervals = json::array();
  for (const auto& est : estimates) intervals.push_back(interval_to_json(est));
  const double m = mahalanobis(data.X, data.w, crit);
  json result = {{"n", data.X.units()},
                 {"k", data.X.covariates()},
                 {"n1", data.w.treated_count()},
                 {"p_accept", p_accept},
                 {"threshold", crit.threshold()},
                 {"balance_statistic", m},
                 {"accepted", m <= crit.threshold()},
                 {"seed", cfg.seed},
                 {"intervals", intervals}};
  out << result.dump(2) << '\n';
  return 0;
}

int run_enumerate(const RunConfig& cfg, std::ostream& out) {
  std::optional<Dataset> data;
  if (!cfg.input.empty()) {
    std::ifstream in(cfg.input);
    if (!in) throw UsageError("cannot open input '" + cfg.input + "'", "input");
    data.emplace(read_dataset(in));
  } else {
    // Last lambda and c levels, so the SATE is generally nonzero.
    const FactorGrid& g = cfg.grid;
    data.emplace(unit_dataset(RngStream(cfg.seed), g, 0, static_cast<int>(g.lambda_levels.size()) - 1,
                              static_cast<int>(g.c_levels.size()) - 1, 0));
  }
  const int n = data->X.units();
  const BalanceCriterion crit = build_criterion(data->X, n / 2, cfg.grid.p_accept);
  const EnumerationCheck check = enumeration_check(data->X, data->outcomes, crit);
  const double tol = 1e-12 * std::max(1.0, std::abs(check.sate));
  json result = {{"n", n},
                 {"k", data->X.covariates()},
                 {"threshold", crit.threshold()},
                 {"total_allocations", binomial_coefficient(n, n / 2)},
                 {"acceptance_set_size", check.set_size},
                 {"mean_estimate", check.mean_estimate},
                 {"sate", check.sate},
                 {"abs_error", check.abs_error},
                 {"unbiased", check.abs_error <= tol}};
  out << result.dump(2) << '\n';
  return check.abs_error <= tol ? 0 : 3;
}

}  // namespace

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    switch (cfg.mode) {
      case Mode::Simulate: return run_simulate(cfg, out, err);
      case Mode::Analyze: return run_analyze(cfg, out);
      case Mode::Enumerate: return run_enumerate(cfg, out);
    }
  } catch (const GridError& e) {
    err << "rerand: harness: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    err << "rerand: usage: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "rerand: " << to_string(cfg.mode) << ": " << e.what() << '\n';
    return 1;
  }
  return 1;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = parse_args(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << "usage: rerand --seed N [--config PATH] [--mode simulate|analyze|enumerate]\n"
           "              [--preset desk|paper|custom] [--workers N] [--out DIR]\n"
           "              [--n N] [--k K] [--dgp DGP1|DGP2|both] [--cov-dist normal01|exp1]\n"
           "              [--datasets D] [--experiments R] [--methods A,B,...]\n"
           "              [--bayes-h H] [--input PATH] [--save-datasets] [--quiet]\n";
    return 0;
  } catch (const UsageError& e) {
    err << "rerand: usage: " << e.what();
    if (!e.key().empty()) err << " [key: " << e.key() << "]";
    err << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "rerand: " << e.what() << '\n';
    return 2;
  }
  return run(cfg, out, err);
}

}  // namespace rerand
