#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rerand/cli.hpp"
#include "rerand/error.hpp"
#include "rerand/report.hpp"

using namespace rerand;
using nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rerand_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int call(const std::vector<std::string>& args, std::string* out_text = nullptr,
         std::string* err_text = nullptr) {
  std::vector<const char*> argv{"rerand"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

json tiny(const std::string& out_dir) {
  return {{"seed", 5},
          {"workers", 1},
          {"out_dir", out_dir},
          {"quiet", true},
          {"methods", {"Neyman", "NointE", "IntE", "LDR"}},
          {"r0_levels", {0.5}},
          {"lambda_levels", {"zero"}},
          {"c_levels", {0.0, 0.1}},
          {"datasets_per_cell", 2},
          {"experiments_per_dataset", 5},
          {"n", 20},
          {"k", 2},
          {"p_accept", 0.1},
          {"ldr_draws", 2000}};
}

}  // namespace

TEST_CASE("a seed alone gives the desk defaults", "[cli]") {
  const RunConfig cfg = parse_config(json{{"seed", 3}});
  CHECK(cfg.seed == 3);
  CHECK(cfg.preset == Preset::Desk);
  CHECK(cfg.mode == Mode::Simulate);
  CHECK(cfg.grid.datasets_per_cell == 10);
  CHECK(cfg.grid.experiments_per_dataset == 500);
  CHECK(cfg.grid.gibbs.H == 2000);
  CHECK(cfg.grid.gibbs.burn_in == 500);
  CHECK(cfg.grid.methods.size() == 10);
  CHECK(cfg.grid.c_levels.size() == 5);
  CHECK(cfg.grid.n == 50);
  CHECK(cfg.grid.K == 3);
  CHECK(cfg.workers >= 1);
  CHECK(!cfg.both_dgps);

  const RunConfig paper = parse_config(json{{"seed", 3}, {"preset", "paper"}});
  CHECK(paper.grid.datasets_per_cell == 20);
  CHECK(paper.grid.experiments_per_dataset == 2000);
  const RunConfig both = parse_config(json{{"seed", 3}, {"dgp", "both"}});
  CHECK(both.both_dgps);
}

TEST_CASE("strict parsing names the offending key", "[cli]") {
  auto key_of = [](const json& doc) {
    try {
      parse_config(doc);
    } catch (const UsageError& e) {
      return e.key();
    }
    return std::string("<none>");
  };
  CHECK(key_of(json{{"seed", 1}, {"r0_levles", {0.2}}}) == "r0_levles");
  CHECK(key_of(json{{"r0_levels", {0.2}}}) == "seed");
  CHECK(key_of(json{{"seed", 1}, {"n", "fifty"}}) == "n");
  CHECK(key_of(json{{"seed", 1}, {"methods", {"Neyman", "Bogus"}}}) == "methods");
  CHECK(key_of(json{{"seed", 1}, {"prior", {{"coef_sd", 1.0}, {"shape", 2.0}}}}) == "prior.shape");
  CHECK(key_of(json{{"seed", 1}, {"mode", "analyze"}}) == "input");
  CHECK(key_of(json{{"seed", 1}, {"c_levels", {-1.0}}}) == "c_levels");
  CHECK(key_of(json::array()) == "config");
}

TEST_CASE("parsing is idempotent through the canonical form", "[cli]") {
  const json doc = tiny("x");
  const RunConfig a = parse_config(doc);
  const RunConfig b = parse_config(doc);
  CHECK(a == b);
  CHECK(config_hash(a) == config_hash(b));
  json canonical = config_to_json(a);
  canonical["workers"] = 1;
  canonical["out_dir"] = "x";
  canonical["quiet"] = true;
  const RunConfig c = parse_config(canonical);
  CHECK(c == a);
  json changed = doc;
  changed["seed"] = 6;
  CHECK(config_hash(parse_config(changed)) != config_hash(a));
  json moved = doc;
  moved["out_dir"] = "elsewhere";
  moved["workers"] = 3;
  CHECK(config_hash(parse_config(moved)) == config_hash(a));
}

TEST_CASE("flags override the configuration file", "[cli]") {
  const auto dir = scratch("flags");
  const auto path = dir / "cfg.json";
  std::ofstream(path) << tiny((dir / "out").string()).dump();
  const char* argv[] = {"rerand", "--config", path.c_str(), "--seed", "11", "--n", "30",
                        "--methods", "Neyman,LDR", "--experiments", "7"};
  const RunConfig cfg = parse_args(11, argv);
  CHECK(cfg.seed == 11);
  CHECK(cfg.grid.n == 30);
  CHECK(cfg.grid.K == 2);
  CHECK(cfg.grid.experiments_per_dataset == 7);
  CHECK(cfg.grid.methods == std::vector<Method>{Method::Neyman, Method::LDR});
  const char* bad[] = {"rerand", "--seed", "1", "--bogus"};
  CHECK_THROWS_AS(parse_args(4, bad), UsageError);
}

TEST_CASE("exit codes", "[cli]") {
  std::string out, err;
  CHECK(call({"--help"}, &out) == 0);
  CHECK(out.find("usage") != std::string::npos);
  CHECK(call({"--n", "10"}, nullptr, &err) == 2);
  CHECK(err.find("seed") != std::string::npos);
  CHECK(call({"--seed", "1", "--mode", "analyze", "--input", "/nonexistent/file.csv"}) == 2);
}

TEST_CASE("simulate writes records, summary and provenance", "[cli]") {
  const auto dir = scratch("simulate");
  const RunConfig cfg = parse_config(tiny(dir.string()));
  std::ostringstream out, err;
  REQUIRE(run(cfg, out, err) == 0);
  const std::string csv = slurp(dir / "results.csv");
  std::istringstream lines(csv);
  std::string first, header, line;
  std::getline(lines, first);
  std::getline(lines, header);
  CHECK(first.rfind("# seed=5 config_hash=", 0) == 0);
  CHECK(header == "m,e,f,g,d,r,method,length,covered");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == cfg.grid.record_count());

  const json summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary.at("seed") == 5);
  CHECK(summary.at("main_effects_length").contains("LDR"));
  CHECK(!summary.at("main_effects_length").contains("Neyman"));
  CHECK(summary.at("main_effects_coverage").contains("Neyman"));
  CHECK(summary.at("anova_length").at("percentages").size() == 7);
  CHECK(summary.at("grid") == config_to_json(cfg));

  const auto dir2 = scratch("simulate_again");
  json doc = tiny(dir2.string());
  doc["workers"] = 3;
  REQUIRE(run(parse_config(doc), out, err) == 0);
  CHECK(slurp(dir2 / "results.csv") == csv);
}

TEST_CASE("both DGPs produce two files and a pooled summary", "[cli]") {
  const auto dir = scratch("both");
  json doc = tiny(dir.string());
  doc["dgp"] = "both";
  doc["save_datasets"] = true;
  std::ostringstream out, err;
  REQUIRE(run(parse_config(doc), out, err) == 0);
  CHECK(std::filesystem::exists(dir / "results_DGP1.csv"));
  CHECK(std::filesystem::exists(dir / "results_DGP2.csv"));
  CHECK(std::filesystem::exists(dir / "datasets" / "DGP2_e0_f0_g1_d1.csv"));
  const json summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary.at("pooled") == true);
  CHECK(summary.at("by_dgp").contains("DGP1"));
}

TEST_CASE("analyze reports every requested method", "[cli]") {
  const auto dir = scratch("analyze");
  const auto path = dir / "obs.csv";
  {
    std::ofstream f(path);
    f << "# p_accept=0.2\nx1,x2,w,y\n";
    RngStream s(7);
    for (int i = 0; i < 30; ++i) {
      const double x1 = s.normal(), x2 = s.normal();
      const int w = i % 2;
      f << x1 << ',' << x2 << ',' << w << ',' << (x1 + x2 + 2.0 * w + s.normal()) << '\n';
    }
  }
  std::string out, err;
  REQUIRE(call({"--seed", "3", "--mode", "analyze", "--input", path.string(), "--methods",
                "Neyman,IntE,NointB,LDR", "--bayes-h", "200"},
               &out, &err) == 0);
  const json result = json::parse(out);
  CHECK(result.at("n") == 30);
  CHECK(result.at("k") == 2);
  CHECK(result.at("p_accept") == 0.2);
  REQUIRE(result.at("intervals").size() == 4);
  CHECK(result.at("intervals")[3].at("method") == "LDR");
  CHECK(result.at("intervals")[0].at("critical_value") == 1.96);
  CHECK(result.at("intervals")[2].at("se").is_null());

  std::string again;
  call({"--seed", "3", "--mode", "analyze", "--input", path.string(), "--methods",
        "Neyman,IntE,NointB,LDR", "--bayes-h", "200"},
       &again);
  CHECK(again == out);
}

TEST_CASE("enumerate checks unbiasedness on a small design", "[cli]") {
  std::string out;
  REQUIRE(call({"--seed", "2", "--mode", "enumerate", "--n", "12", "--k", "2"}, &out) == 0);
  const json result = json::parse(out);
  CHECK(result.at("unbiased") == true);
  CHECK(result.at("total_allocations") == 924.0);
  CHECK(result.at("acceptance_set_size").get<int>() > 0);
}
