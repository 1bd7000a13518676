#include "rerand/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rerand/distributions.hpp"
#include "rerand/error.hpp"

namespace rerand {

namespace {

struct ArmStats {
  Eigen::MatrixXd gram;  // sum z z'
  Eigen::VectorXd zy;    // sum z y
  double yy = 0.0;
  double y_sum = 0.0;
  int count = 0;
};

// Column sums of the arm-1 and arm-0 mean rows, taken over one arm's units.
struct ImputeSums {
  Eigen::VectorXd mu1;
  Eigen::VectorXd mu0;
};

struct ModelData {
  Eigen::MatrixXd Z;
  std::array<ArmStats, 2> arms;          // index = W
  std::array<ImputeSums, 2> imputation;  // index = W
};

// Row of the arm-w mean at covariate row xt.
Eigen::RowVectorXd mean_row(const Eigen::RowVectorXd& xt, bool treated, BayesModel model) {
  const Eigen::Index K = xt.size();
  const Eigen::Index p = model == BayesModel::IntB ? 2 + 2 * K : 2 + K;
  Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(p);
  z[0] = 1.0;
  z[1] = treated ? 1.0 : 0.0;
  z.segment(2, K) = xt;
  if (model == BayesModel::IntB && treated) z.tail(K) = xt;
  return z;
}

Eigen::MatrixXd model_covariates(const ObservedData& data, BayesModel model) {
  if (model == BayesModel::NointB) return data.X.values();
  return data.X.values().rowwise() - data.X.column_means();
}

ModelData prepare(const ObservedData& data, BayesModel model) {
  const int n = data.X.units();
  const int K = data.X.covariates();
  if (data.w.treated_count() < 2 || data.w.control_count() < 2)
    throw DegenerateDesignError("Bayesian model needs at least 2 units per arm");
  if (model == BayesModel::IntB && n <= 2 * K + 2)
    throw DegenerateDesignError("IntB needs n > 2K + 2");
  ModelData md;
  md.Z = bayes_design(data, model);
  const Eigen::MatrixXd xt = model_covariates(data, model);
  const Eigen::Index p = md.Z.cols();
  for (auto& arm : md.arms) {
    arm.gram = Eigen::MatrixXd::Zero(p, p);
    arm.zy = Eigen::VectorXd::Zero(p);
  }
  for (auto& s : md.imputation) {
    s.mu1 = Eigen::VectorXd::Zero(p);
    s.mu0 = Eigen::VectorXd::Zero(p);
  }
  for (int i = 0; i < n; ++i) {
    const int w = data.w.treated(i) ? 1 : 0;
    ArmStats& arm = md.arms[static_cast<std::size_t>(w)];
    const auto z = md.Z.row(i);
    arm.gram.noalias() += z.transpose() * z;
    arm.zy += z.transpose() * data.y[i];
    arm.yy += data.y[i] * data.y[i];
    arm.y_sum += data.y[i];
    ++arm.count;
    ImputeSums& s = md.imputation[static_cast<std::size_t>(w)];
    s.mu1 += mean_row(xt.row(i), true, model).transpose();
    s.mu0 += mean_row(xt.row(i), false, model).transpose();
  }
  return md;
}

double arm_ssr(const ArmStats& arm, const Eigen::VectorXd& b) {
  const double ssr = arm.yy - 2.0 * b.dot(arm.zy) + b.dot(arm.gram * b);
  if (!std::isfinite(ssr)) throw NumericError("Gibbs sampler: non-finite residual sum of squares");
  return std::max(ssr, 0.0);
}

PosteriorDraw unpack(const Eigen::VectorXd& b, int K, BayesModel model, double s0, double s1) {
  PosteriorDraw d;
  d.alpha0 = b[0];
  d.gamma = b[1];
  d.beta0 = b.segment(2, K);
  if (model == BayesModel::IntB) d.delta = b.tail(K);
  d.sigma0_sq = s0;
  d.sigma1_sq = s1;
  return d;
}

Eigen::VectorXd pack(const PosteriorDraw& d, int K, BayesModel model) {
  const Eigen::Index p = model == BayesModel::IntB ? 2 + 2 * K : 2 + K;
  Eigen::VectorXd b(p);
  b[0] = d.alpha0;
  b[1] = d.gamma;
  b.segment(2, K) = d.beta0;
  if (model == BayesModel::IntB) b.tail(K) = *d.delta;
  return b;
}

// n tau = sum over treated of (1 - r) y + r mu1 - mu0 plus, over controls,
// mu1 - mu0 / r + (1 / r - 1) y, with r = sigma0 / sigma1.
double fast_tau(const ModelData& md, const Eigen::VectorXd& b, double s0, double s1) {
  const double r = std::sqrt(s0 / s1);
  const ArmStats& t = md.arms[1];
  const ArmStats& c = md.arms[0];
  const ImputeSums& st = md.imputation[1];
  const ImputeSums& sc = md.imputation[0];
  const double treated = (1.0 - r) * t.y_sum + r * st.mu1.dot(b) - st.mu0.dot(b);
  const double control = sc.mu1.dot(b) - sc.mu0.dot(b) / r + (1.0 / r - 1.0) * c.y_sum;
  return (treated + control) / static_cast<double>(t.count + c.count);
}

// Drives the chain and hands each kept state to `keep(b, s0, s1)`.
template <typename Keep>
void run_chain(RngStream& stream, const ModelData& md, const ObservedData& data,
               const PriorSpec& prior, const GibbsOptions& options, Keep&& keep) {
  prior.validate();
  if (options.H < 1 || options.burn_in < 0)
    throw DomainError("Gibbs sampler: H must be positive and burn_in nonnegative");
  if (options.fixed_variances &&
      !((*options.fixed_variances)[0] > 0.0 && (*options.fixed_variances)[1] > 0.0))
    throw DomainError("Gibbs sampler: fixed variances must be positive");

  const Eigen::Index p = md.Z.cols();
  Eigen::VectorXd b = ols_fit(md.Z, data.y).coefficients;
  std::array<double, 2> sig{};
  if (options.fixed_variances) {
    sig = *options.fixed_variances;
  } else {
    for (std::size_t w = 0; w < 2; ++w) {
      const ArmStats& arm = md.arms[w];
      const double floor = 1e-12 * (1.0 + arm.yy / arm.count);
      sig[w] = std::max(arm_ssr(arm, b) / std::max(arm.count - 1, 1), floor);
    }
  }
  const Eigen::MatrixXd prior_precision =
      Eigen::MatrixXd::Identity(p, p) / (prior.coef_sd * prior.coef_sd);
  Eigen::MatrixXd precision(p, p);
  Eigen::VectorXd rhs(p);
  const int total = options.burn_in + options.H;
  for (int it = 0; it < total; ++it) {
    precision = prior_precision + md.arms[0].gram / sig[0] + md.arms[1].gram / sig[1];
    rhs = md.arms[0].zy / sig[0] + md.arms[1].zy / sig[1];
    b = draw_coefficient_block(stream, precision, rhs);
    if (!options.fixed_variances) {
      for (std::size_t w = 0; w < 2; ++w) {
        const ArmStats& arm = md.arms[w];
        sig[w] = sample_inverse_gamma(stream, prior.var_shape + 0.5 * arm.count,
                                      prior.var_scale + 0.5 * arm_ssr(arm, b));
      }
    }
    if (it >= options.burn_in) keep(b, sig[0], sig[1]);
  }
}

}  // namespace

Method to_method(BayesModel model) {
  return model == BayesModel::NointB ? Method::NointB : Method::IntB;
}

void PriorSpec::validate() const {
  if (!(coef_sd > 0.0) || !(var_shape > 0.0) || !(var_scale > 0.0))
    throw DomainError("prior: coef_sd, var_shape and var_scale must be positive");
}

Eigen::MatrixXd bayes_design(const ObservedData& data, BayesModel model) {
  const int n = data.X.units();
  const Eigen::MatrixXd xt = model_covariates(data, model);
  Eigen::MatrixXd Z(n, model == BayesModel::IntB ? 2 + 2 * xt.cols() : 2 + xt.cols());
  for (int i = 0; i < n; ++i) Z.row(i) = mean_row(xt.row(i), data.w.treated(i), model);
  return Z;
}

Eigen::VectorXd draw_coefficient_block(RngStream& stream, const Eigen::MatrixXd& precision,
                                       const Eigen::VectorXd& rhs) {
  const Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success)
    throw NumericError("coefficient block: precision matrix is not positive definite");
  Eigen::VectorXd xi(rhs.size());
  for (Eigen::Index j = 0; j < xi.size(); ++j) xi[j] = stream.normal();
  // U = L', so U v = xi gives v ~ N(0, P^{-1}).
  Eigen::VectorXd b = llt.solve(rhs) + llt.matrixU().solve(xi);
  if (!b.allFinite()) throw NumericError("coefficient block: non-finite draw");
  return b;
}

std::vector<PosteriorDraw> gibbs_sample(RngStream& stream, const ObservedData& data,
                                        BayesModel model, const PriorSpec& prior,
                                        const GibbsOptions& options) {
  const ModelData md = prepare(data, model);
  const int K = data.X.covariates();
  std::vector<PosteriorDraw> draws;
  draws.reserve(static_cast<std::size_t>(std::max(options.H, 0)));
  run_chain(stream, md, data, prior, options,
            [&](const Eigen::VectorXd& b, double s0, double s1) {
              draws.push_back(unpack(b, K, model, s0, s1));
            });
  return draws;
}

double impute_tau(const PosteriorDraw& draw, const ObservedData& data, BayesModel model) {
  const int n = data.X.units();
  const int K = data.X.covariates();
  const Eigen::VectorXd b = pack(draw, K, model);
  const Eigen::MatrixXd xt = model_covariates(data, model);
  const double s0 = std::sqrt(draw.sigma0_sq);
  const double s1 = std::sqrt(draw.sigma1_sq);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double mu1 = mean_row(xt.row(i), true, model).dot(b);
    const double mu0 = mean_row(xt.row(i), false, model).dot(b);
    double y1, y0;
    if (data.w.treated(i)) {
      y1 = data.y[i];
      y0 = mu0 + (s0 / s1) * (y1 - mu1);
    } else {
      y0 = data.y[i];
      y1 = mu1 + (s1 / s0) * (y0 - mu0);
    }
    sum += y1 - y0;
  }
  return sum / n;
}

TauPosterior sample_tau_posterior(RngStream& stream, const ObservedData& data, BayesModel model,
                                  const PriorSpec& prior, const GibbsOptions& options) {
  const ModelData md = prepare(data, model);
  TauPosterior post;
  post.H = options.H;
  post.burn_in = options.burn_in;
  post.samples.reserve(static_cast<std::size_t>(std::max(options.H, 0)));
  run_chain(stream, md, data, prior, options,
            [&](const Eigen::VectorXd& b, double s0, double s1) {
              post.samples.push_back(fast_tau(md, b, s0, s1));
            });
  return post;
}

IntervalEstimate credible_interval(const TauPosterior& posterior, double level, Method method) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("credible interval: level must lie in (0, 1)");
  if (posterior.samples.size() < 100)
    throw SizeError("credible interval needs at least 100 posterior samples");
  std::vector<double> sorted = posterior.samples;
  std::sort(sorted.begin(), sorted.end());
  const double tail = 0.5 * (1.0 - level);
  IntervalEstimate est;
  est.method = method;
  est.point = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  est.lower = sorted_quantile(sorted, tail);
  est.upper = sorted_quantile(sorted, 1.0 - tail);
  return est;
}

IntervalEstimate bayes_interval(RngStream& stream, const ObservedData& data, BayesModel model,
                                const PriorSpec& prior, const GibbsOptions& options) {
  return credible_interval(sample_tau_posterior(stream, data, model, prior, options), 0.95,
                           to_method(model));
}

}  // namespace rerand
