#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rerand/harness.hpp"

namespace rerand {

enum class Mode { Simulate, Analyze, Enumerate };
enum class Preset { Desk, Paper, Custom };

struct RunConfig {
  FactorGrid grid;
  /// Run DGP1 and DGP2 and add a pooled view to the summary.
  bool both_dgps = false;
  std::uint64_t seed = 0;
  int workers = 1;
  Preset preset = Preset::Desk;
  std::string out_dir = "out";
  Mode mode = Mode::Simulate;
  /// Analyze: observed-data CSV. Enumerate: optional dataset file.
  std::string input;
  bool save_datasets = false;
  bool quiet = false;

  bool operator==(const RunConfig& other) const;
};

/// Keys accepted in a configuration document.
const std::vector<std::string>& config_keys();

/// Strict parse of a JSON configuration object. Applies the preset first, then
/// explicit keys. Throws UsageError naming the offending key.
RunConfig parse_config(const nlohmann::json& doc);

/// Reads `--config` (if given), overlays the remaining flags, and parses the result.
RunConfig parse_args(int argc, const char* const* argv);

/// Canonical JSON of everything that affects results (not workers, out_dir, quiet).
nlohmann::json config_to_json(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

/// Executes one run. Returns the process exit status.
int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Entry point of the `rerand` executable.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rerand
