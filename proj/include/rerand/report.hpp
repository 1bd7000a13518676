#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "rerand/estimators.hpp"
#include "rerand/harness.hpp"

namespace rerand {

/// Leading comment line of every results file.
std::string provenance_line(std::uint64_t seed, std::uint64_t config_hash);

/// `provenance` (if nonempty) then `m,e,f,g,d,r,method,length,covered` and one
/// row per record in the given order. Lengths use 17 significant digits.
void write_results_csv(std::ostream& out, std::span<const ResultRecord> records,
                       std::span<const Method> methods, std::string_view provenance);

nlohmann::json anova_to_json(const AnovaTable& table);
nlohmann::json interval_to_json(const IntervalEstimate& est);

/// anova_length, anova_coverage, main_effects_length, main_effects_coverage.
nlohmann::json summarize(std::span<const ResultRecord> records, std::span<const Method> methods);

struct AnalyzeInput {
  ObservedData data;
  std::map<std::string, std::string, std::less<>> header;
};

/// Reads `# key=value` lines, a header x1..xK,w,y, and one row per unit.
AnalyzeInput read_observed_csv(std::istream& in);

}  // namespace rerand
