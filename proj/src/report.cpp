#include "rerand/report.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "rerand/error.hpp"

namespace rerand {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(const std::string& s, int row, const std::string& column) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("row " + std::to_string(row) + ": column " + column + " is not a number: '" + s +
                       "'",
                   column);
}

}  // namespace

std::string provenance_line(std::uint64_t seed, std::uint64_t config_hash) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "# seed=%llu config_hash=%016llx",
                static_cast<unsigned long long>(seed), static_cast<unsigned long long>(config_hash));
  return buf;
}

void write_results_csv(std::ostream& out, std::span<const ResultRecord> records,
                       std::span<const Method> methods, std::string_view provenance) {
  if (!provenance.empty()) out << provenance << '\n';
  out << "m,e,f,g,d,r,method,length,covered\n";
  std::string line;
  for (const auto& r : records) {
    if (r.m >= methods.size()) throw DomainError("results: method index outside the label list");
    line.clear();
    line += std::to_string(r.m) + ',' + std::to_string(r.e) + ',' + std::to_string(r.f) + ',' +
            std::to_string(r.g) + ',' + std::to_string(r.d) + ',' + std::to_string(r.r) + ',';
    line += to_string(methods[r.m]);
    line += ',' + format_double(r.length) + ',' + (r.covered ? '1' : '0') + '\n';
    out << line;
  }
}

nlohmann::json anova_to_json(const AnovaTable& t) {
  nlohmann::json ss = nlohmann::json::object();
  nlohmann::json pct = nlohmann::json::object();
  const auto comps = t.components();
  for (std::size_t i = 0; i < comps.size(); ++i) {
    ss[kAnovaSources[i]] = comps[i];
    pct[kAnovaSources[i]] = t.percentages[i];
  }
  ss["total"] = t.ss_total;
  return {{"sum_of_squares", ss}, {"percentages", pct}, {"degenerate", t.degenerate}};
}

nlohmann::json interval_to_json(const IntervalEstimate& est) {
  nlohmann::json j = {{"method", std::string(to_string(est.method))},
                      {"point", est.point},
                      {"lower", est.lower},
                      {"upper", est.upper},
                      {"length", est.length()}};
  j["se"] = est.se ? nlohmann::json(*est.se) : nlohmann::json(nullptr);
  j["critical_value"] =
      est.critical_value ? nlohmann::json(*est.critical_value) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json summarize(std::span<const ResultRecord> records, std::span<const Method> methods) {
  nlohmann::json out;
  out["anova_length"] = anova_to_json(anova(records, Metric::Length));
  out["anova_coverage"] = anova_to_json(anova(records, Metric::Coverage));
  nlohmann::json length = nlohmann::json::object();
  if (std::find(methods.begin(), methods.end(), Method::Neyman) != methods.end())
    for (const auto& me : main_effects_length(records, methods))
      length[std::string(to_string(me.method))] = me.value;
  nlohmann::json coverage = nlohmann::json::object();
  for (const auto& me : main_effects_coverage(records, methods))
    coverage[std::string(to_string(me.method))] = me.value;
  out["main_effects_length"] = length;
  out["main_effects_coverage"] = coverage;
  return out;
}

AnalyzeInput read_observed_csv(std::istream& in) {
  std::map<std::string, std::string, std::less<>> header;
  std::string line;
  std::vector<std::string> columns;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) header[trim(line.substr(1, eq - 1))] = trim(line.substr(eq + 1));
      continue;
    }
    columns = split_csv(trim(line));
    break;
  }
  if (columns.size() < 3) throw UsageError("analyze input: expected header x1..xK,w,y", "input");
  const int K = static_cast<int>(columns.size()) - 2;
  for (int j = 0; j < K; ++j)
    if (trim(columns[static_cast<std::size_t>(j)]) != "x" + std::to_string(j + 1))
      throw UsageError("analyze input: column " + std::to_string(j + 1) + " must be x" +
                           std::to_string(j + 1),
                       "input");
  if (trim(columns[static_cast<std::size_t>(K)]) != "w" ||
      trim(columns[static_cast<std::size_t>(K + 1)]) != "y")
    throw UsageError("analyze input: last two columns must be w,y", "input");

  std::vector<std::vector<double>> xs;
  std::vector<std::uint8_t> w;
  std::vector<double> y;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line[0] == '#') continue;
    ++row;
    const auto cells = split_csv(trim(line));
    if (cells.size() != columns.size())
      throw UsageError("analyze input: row " + std::to_string(row) + " has " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(columns.size()),
                       "input");
    std::vector<double> x(static_cast<std::size_t>(K));
    for (int j = 0; j < K; ++j)
      x[static_cast<std::size_t>(j)] =
          to_double(trim(cells[static_cast<std::size_t>(j)]), row, "x" + std::to_string(j + 1));
    const std::string wcell = trim(cells[static_cast<std::size_t>(K)]);
    if (wcell != "0" && wcell != "1")
      throw UsageError("analyze input: row " + std::to_string(row) + ": w must be 0 or 1", "w");
    xs.push_back(std::move(x));
    w.push_back(wcell == "1" ? 1 : 0);
    y.push_back(to_double(trim(cells[static_cast<std::size_t>(K + 1)]), row, "y"));
  }
  const int n = static_cast<int>(xs.size());
  Eigen::MatrixXd X(n, K);
  Eigen::VectorXd yv(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < K; ++j) X(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    yv[i] = y[static_cast<std::size_t>(i)];
  }
  return AnalyzeInput{ObservedData(CovariateMatrix(std::move(X)), Allocation(std::move(w)), std::move(yv)),
                      std::move(header)};
}

}  // namespace rerand
