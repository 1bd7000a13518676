#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rerand/design.hpp"
#include "rerand/random.hpp"

namespace rerand {

enum class DgpKind { DGP1, DGP2 };
enum class CovDist { Normal01, Exp1 };
enum class LambdaMode { Zero, Scaled };

std::string_view to_string(DgpKind kind);
std::string_view to_string(CovDist dist);
std::string_view to_string(LambdaMode mode);
DgpKind parse_dgp(std::string_view label);
CovDist parse_cov_dist(std::string_view label);
LambdaMode parse_lambda_mode(std::string_view label);

struct DgpConfig {
  DgpKind dgp = DgpKind::DGP1;
  int n = 50;
  int K = 3;
  CovDist cov_dist = CovDist::Normal01;
  double r0_sq = 0.5;
  LambdaMode lambda_mode = LambdaMode::Zero;
  double c = 0.0;

  /// Throws DomainError unless n is even and >= 4, K >= 1, 0 < r0_sq < 1, c >= 0.
  void validate() const;
};

struct DgpConstants {
  Eigen::VectorXd xi;
  Eigen::VectorXd eta;
  double sigma_eps_sq = 0.0;
  double sigma_u_sq = 0.0;
  double lambda = 0.0;
  Eigen::VectorXd x_mean;
};

struct PotentialOutcomes {
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
  double sate = 0.0;
};

/// sigma_eps^2 = K (1 - R0^2) / R0^2, sigma_u^2 = c sigma_eps^2, and lambda
/// either 0 or 0.3 sqrt(50 / n) sqrt(K / R0^2).
DgpConstants build_constants(const DgpConfig& cfg);

CovariateMatrix generate_covariates(RngStream& stream, const DgpConfig& cfg);

/// Y(0) = xi'x + eps; Y(1) = Y(0) + lambda + u under DGP1, with an extra
/// eta'(x - E x) under DGP2.
PotentialOutcomes generate_outcomes(RngStream& stream, const DgpConfig& cfg,
                                    const CovariateMatrix& X);

struct Dataset {
  DgpConfig config;
  CovariateMatrix X;
  PotentialOutcomes outcomes;
  Lineage lineage;
};

/// Covariates from stream.derive(0), outcomes from stream.derive(1).
Dataset generate_dataset(const RngStream& stream, const DgpConfig& cfg);

/// Observed outcomes y_i = Y_i(W_i).
Eigen::VectorXd observe(const PotentialOutcomes& po, const Allocation& w);

/// Text format: `# rerand-dataset v1` and `# key=value` header lines, a column
/// header x1..xK,y0,y1, then one row per unit with 17 significant digits.
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);

}  // namespace rerand
