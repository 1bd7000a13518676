#include "rerand/dgp.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "rerand/distributions.hpp"
#include "rerand/error.hpp"

namespace rerand {

std::string_view to_string(DgpKind kind) { return kind == DgpKind::DGP1 ? "DGP1" : "DGP2"; }
std::string_view to_string(CovDist dist) { return dist == CovDist::Normal01 ? "normal01" : "exp1"; }
std::string_view to_string(LambdaMode mode) { return mode == LambdaMode::Zero ? "zero" : "scaled"; }

DgpKind parse_dgp(std::string_view label) {
  if (label == "DGP1" || label == "dgp1" || label == "1") return DgpKind::DGP1;
  if (label == "DGP2" || label == "dgp2" || label == "2") return DgpKind::DGP2;
  throw UsageError("unknown dgp '" + std::string(label) + "'", "dgp");
}

CovDist parse_cov_dist(std::string_view label) {
  if (label == "normal01" || label == "normal") return CovDist::Normal01;
  if (label == "exp1" || label == "exp") return CovDist::Exp1;
  throw UsageError("unknown covariate distribution '" + std::string(label) + "'", "cov_dist");
}

LambdaMode parse_lambda_mode(std::string_view label) {
  if (label == "zero") return LambdaMode::Zero;
  if (label == "scaled") return LambdaMode::Scaled;
  throw UsageError("unknown lambda mode '" + std::string(label) + "'", "lambda_levels");
}

void DgpConfig::validate() const {
  if (n < 4 || n % 2 != 0) throw DomainError("dgp: n must be even and at least 4");
  if (K < 1) throw DomainError("dgp: K must be at least 1");
  if (!(r0_sq > 0.0 && r0_sq < 1.0)) throw DomainError("dgp: r0_sq must lie in (0, 1)");
  if (!(c >= 0.0) || !std::isfinite(c)) throw DomainError("dgp: c must be a finite nonnegative number");
}

DgpConstants build_constants(const DgpConfig& cfg) {
  cfg.validate();
  DgpConstants k;
  k.xi = Eigen::VectorXd::Ones(cfg.K);
  k.eta.resize(cfg.K);
  constexpr double cycle[3] = {1.0, 0.5, -0.5};
  for (int j = 0; j < cfg.K; ++j) k.eta[j] = cycle[j % 3];
  k.sigma_eps_sq = cfg.K * (1.0 - cfg.r0_sq) / cfg.r0_sq;
  k.sigma_u_sq = cfg.c * k.sigma_eps_sq;
  // Var(Y(0)) = K + sigma_eps^2 = K / R0^2 in the super-population.
  k.lambda = cfg.lambda_mode == LambdaMode::Zero
                 ? 0.0
                 : 0.3 * std::sqrt(50.0 / cfg.n) * std::sqrt(cfg.K / cfg.r0_sq);
  k.x_mean = Eigen::VectorXd::Constant(cfg.K, cfg.cov_dist == CovDist::Exp1 ? 1.0 : 0.0);
  return k;
}

CovariateMatrix generate_covariates(RngStream& stream, const DgpConfig& cfg) {
  cfg.validate();
  const StandardDist dist =
      cfg.cov_dist == CovDist::Exp1 ? StandardDist::Exp1 : StandardDist::Normal01;
  Eigen::MatrixXd X(cfg.n, cfg.K);
  for (int i = 0; i < cfg.n; ++i)
    for (int j = 0; j < cfg.K; ++j) X(i, j) = sample_standard(stream, dist);
  return CovariateMatrix(std::move(X));
}

PotentialOutcomes generate_outcomes(RngStream& stream, const DgpConfig& cfg,
                                    const CovariateMatrix& X) {
  const DgpConstants k = build_constants(cfg);
  if (X.units() != cfg.n || X.covariates() != cfg.K)
    throw DomainError("dgp: covariate matrix does not match the configuration");
  const StandardDist noise =
      cfg.cov_dist == CovDist::Exp1 ? StandardDist::Exp1Centered : StandardDist::Normal01;
  const double sigma_eps = std::sqrt(k.sigma_eps_sq);
  const double sigma_u = std::sqrt(k.sigma_u_sq);
  PotentialOutcomes po;
  po.y0.resize(cfg.n);
  po.y1.resize(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    const double eps = sigma_eps * sample_standard(stream, noise);
    const double u = sigma_u * stream.normal();
    const auto x = X.values().row(i);
    po.y0[i] = x.dot(k.xi) + eps;
    double effect = k.lambda + u;
    if (cfg.dgp == DgpKind::DGP2) effect += (x.transpose() - k.x_mean).dot(k.eta);
    po.y1[i] = po.y0[i] + effect;
  }
  po.sate = (po.y1 - po.y0).mean();
  return po;
}

Dataset generate_dataset(const RngStream& stream, const DgpConfig& cfg) {
  RngStream cov_stream = stream.derive(0);
  RngStream out_stream = stream.derive(1);
  CovariateMatrix X = generate_covariates(cov_stream, cfg);
  PotentialOutcomes po = generate_outcomes(out_stream, cfg, X);
  return Dataset{cfg, std::move(X), std::move(po), stream.lineage()};
}

Eigen::VectorXd observe(const PotentialOutcomes& po, const Allocation& w) {
  if (w.units() != po.y0.size()) throw DomainError("observe: allocation length mismatch");
  Eigen::VectorXd y(w.units());
  for (int i = 0; i < w.units(); ++i) y[i] = w.treated(i) ? po.y1[i] : po.y0[i];
  return y;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(std::string(s), &pos);
    if (pos != s.size()) throw std::invalid_argument(what);
    return v;
  } catch (const std::exception&) {
    throw UsageError("dataset: cannot parse " + what + " value '" + std::string(s) + "'", what);
  }
}

std::uint64_t parse_u64(std::string_view s, const std::string& what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw UsageError("dataset: cannot parse " + what + " value '" + std::string(s) + "'", what);
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& data) {
  const DgpConfig& cfg = data.config;
  out << "# rerand-dataset v1\n";
  out << "# dgp=" << to_string(cfg.dgp) << '\n';
  out << "# n=" << cfg.n << '\n';
  out << "# k=" << cfg.K << '\n';
  out << "# cov_dist=" << to_string(cfg.cov_dist) << '\n';
  out << "# r0_sq=" << format_double(cfg.r0_sq) << '\n';
  out << "# lambda_mode=" << to_string(cfg.lambda_mode) << '\n';
  out << "# c=" << format_double(cfg.c) << '\n';
  out << "# seed=" << data.lineage.master_seed << '\n';
  out << "# path=";
  for (std::size_t i = 0; i < data.lineage.path.size(); ++i)
    out << (i ? "/" : "") << data.lineage.path[i];
  out << '\n';
  for (int j = 1; j <= cfg.K; ++j) out << 'x' << j << ',';
  out << "y0,y1\n";
  for (int i = 0; i < cfg.n; ++i) {
    for (int j = 0; j < cfg.K; ++j) out << format_double(data.X.values()(i, j)) << ',';
    out << format_double(data.outcomes.y0[i]) << ',' << format_double(data.outcomes.y1[i]) << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "# rerand-dataset v1")
    throw UsageError("dataset: missing '# rerand-dataset v1' header", "dataset");
  std::map<std::string, std::string, std::less<>> header;
  std::string columns;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) != 0) {
      columns = line;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("dataset: malformed header line '" + line + "'", "dataset");
    header[line.substr(2, eq - 2)] = line.substr(eq + 1);
  }
  auto field = [&](const std::string& key) -> const std::string& {
    const auto it = header.find(key);
    if (it == header.end()) throw UsageError("dataset: header lacks '" + key + "'", key);
    return it->second;
  };
  DgpConfig cfg;
  cfg.dgp = parse_dgp(field("dgp"));
  cfg.n = static_cast<int>(parse_u64(field("n"), "n"));
  cfg.K = static_cast<int>(parse_u64(field("k"), "k"));
  cfg.cov_dist = parse_cov_dist(field("cov_dist"));
  cfg.r0_sq = parse_double(field("r0_sq"), "r0_sq");
  cfg.lambda_mode = parse_lambda_mode(field("lambda_mode"));
  cfg.c = parse_double(field("c"), "c");
  cfg.validate();
  Lineage lineage;
  lineage.master_seed = parse_u64(field("seed"), "seed");
  if (const std::string& path = field("path"); !path.empty())
    for (auto part : split(path, '/')) lineage.path.push_back(parse_u64(part, "path"));

  std::ostringstream expected;
  for (int j = 1; j <= cfg.K; ++j) expected << 'x' << j << ',';
  expected << "y0,y1";
  if (columns != expected.str())
    throw UsageError("dataset: expected columns '" + expected.str() + "'", "dataset");

  Eigen::MatrixXd X(cfg.n, cfg.K);
  PotentialOutcomes po;
  po.y0.resize(cfg.n);
  po.y1.resize(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    if (!std::getline(in, line)) throw UsageError("dataset: fewer rows than n", "dataset");
    const auto cells = split(line, ',');
    if (static_cast<int>(cells.size()) != cfg.K + 2)
      throw UsageError("dataset: row " + std::to_string(i + 1) + " has the wrong width", "dataset");
    for (int j = 0; j < cfg.K; ++j) X(i, j) = parse_double(cells[static_cast<std::size_t>(j)], "x");
    po.y0[i] = parse_double(cells[static_cast<std::size_t>(cfg.K)], "y0");
    po.y1[i] = parse_double(cells[static_cast<std::size_t>(cfg.K + 1)], "y1");
  }
  po.sate = (po.y1 - po.y0).mean();
  return Dataset{cfg, CovariateMatrix(std::move(X)), std::move(po), std::move(lineage)};
}

}  // namespace rerand
