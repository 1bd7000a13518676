#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rerand/estimators.hpp"
#include "rerand/random.hpp"

namespace rerand {

/// The two outcome models. NointB: arm means alpha0 + gamma W + beta0'x on raw x.
/// IntB: alpha0 + gamma W + (beta0 + W delta)'(x - xbar).
///
/// Imputation always conditions on the covariates. Integrating x out of the
/// posterior would leave a factor that does not cancel between numerator and
/// denominator, so no entry point imputes unconditionally.
enum class BayesModel { NointB, IntB };

Method to_method(BayesModel model);

struct PriorSpec {
  double coef_sd = 100.0;    // N(0, coef_sd^2) on every coefficient
  double var_shape = 1.0;    // inverse-gamma shape on each arm variance
  double var_scale = 0.01;   // inverse-gamma scale

  void validate() const;
};

struct PosteriorDraw {
  double alpha0 = 0.0;
  double gamma = 0.0;
  Eigen::VectorXd beta0;
  std::optional<Eigen::VectorXd> delta;  // IntB only
  double sigma0_sq = 1.0;
  double sigma1_sq = 1.0;
};

struct TauPosterior {
  std::vector<double> samples;
  int H = 0;
  int burn_in = 0;
};

struct GibbsOptions {
  int H = 2000;
  int burn_in = 500;
  /// Hold {sigma0^2, sigma1^2} fixed instead of sampling them.
  std::optional<std::array<double, 2>> fixed_variances;
};

/// Design rows z_i of a model: [1, W, x] or [1, W, xc, W xc].
Eigen::MatrixXd bayes_design(const ObservedData& data, BayesModel model);

/// b ~ N(P^{-1} rhs, P^{-1}) via the Cholesky factor of the precision P.
Eigen::VectorXd draw_coefficient_block(RngStream& stream, const Eigen::MatrixXd& precision,
                                       const Eigen::VectorXd& rhs);

/// Two-block Gibbs sampler on the observed-data likelihood. Returns H draws
/// after discarding burn_in. Initialized at the OLS fit of the model design.
std::vector<PosteriorDraw> gibbs_sample(RngStream& stream, const ObservedData& data,
                                        BayesModel model, const PriorSpec& prior,
                                        const GibbsOptions& options = {});

/// SATE implied by one draw under perfectly correlated potential outcomes.
double impute_tau(const PosteriorDraw& draw, const ObservedData& data, BayesModel model);

/// Runs the sampler and imputes tau for every kept draw without storing draws.
/// Produces the same samples as imputing each output of gibbs_sample.
TauPosterior sample_tau_posterior(RngStream& stream, const ObservedData& data, BayesModel model,
                                  const PriorSpec& prior, const GibbsOptions& options = {});

/// Equal-tailed interval from interpolated empirical quantiles; point is the
/// posterior mean. Needs at least 100 samples.
IntervalEstimate credible_interval(const TauPosterior& posterior, double level, Method method);

/// Sampler plus 95% credible interval.
IntervalEstimate bayes_interval(RngStream& stream, const ObservedData& data, BayesModel model,
                                const PriorSpec& prior = {}, const GibbsOptions& options = {});

}  // namespace rerand
