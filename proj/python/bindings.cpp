#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <limits>

#include "rerand/bayes.hpp"
#include "rerand/design.hpp"
#include "rerand/dgp.hpp"
#include "rerand/distributions.hpp"
#include "rerand/error.hpp"
#include "rerand/estimators.hpp"
#include "rerand/harness.hpp"
#include "rerand/ldr.hpp"

namespace py = pybind11;
using namespace rerand;

namespace {

ObservedData make_data(const Eigen::MatrixXd& X, const std::vector<int>& w, const Eigen::VectorXd& y) {
  std::vector<std::uint8_t> ind(w.begin(), w.end());
  return ObservedData(CovariateMatrix(X), Allocation(std::move(ind)), y);
}

py::dict interval_dict(const IntervalEstimate& est) {
  py::dict d;
  d["method"] = std::string(to_string(est.method));
  d["point"] = est.point;
  d["lower"] = est.lower;
  d["upper"] = est.upper;
  d["length"] = est.length();
  d["se"] = est.se ? py::object(py::float_(*est.se)) : py::object(py::none());
  d["critical_value"] =
      est.critical_value ? py::object(py::float_(*est.critical_value)) : py::object(py::none());
  return d;
}

std::vector<int> to_list(const Allocation& a) {
  return std::vector<int>(a.indicators().begin(), a.indicators().end());
}

SandwichVariant parse_variant(const std::string& s) {
  if (s == "EHW") return SandwichVariant::EHW;
  if (s == "HC2") return SandwichVariant::HC2;
  if (s == "HC3") return SandwichVariant::HC3;
  throw UsageError("unknown sandwich variant '" + s + "'", "variant");
}

BayesModel parse_model(const std::string& s) {
  if (s == "NointB") return BayesModel::NointB;
  if (s == "IntB") return BayesModel::IntB;
  throw UsageError("unknown Bayesian model '" + s + "'", "model");
}

std::vector<Method> parse_methods(const std::vector<std::string>& labels) {
  std::vector<Method> out;
  for (const auto& l : labels) out.push_back(parse_method(l));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mahalanobis rerandomization and inference for the sample average treatment effect";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<SingularityError>(m, "SingularityError", base.ptr());
  py::register_exception<CollinearityError>(m, "CollinearityError", base.ptr());
  py::register_exception<LeverageError>(m, "LeverageError", base.ptr());
  py::register_exception<AcceptanceFailure>(m, "AcceptanceFailure", base.ptr());
  py::register_exception<SizeError>(m, "SizeError", base.ptr());
  py::register_exception<DegenerateDesignError>(m, "DegenerateDesignError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());

  std::vector<std::string> labels;
  for (Method method : kAllMethods) labels.emplace_back(to_string(method));
  m.attr("METHODS") = labels;

  m.def("chisq_quantile", &chisq_quantile, py::arg("dof"), py::arg("p"));

  m.def(
      "mahalanobis",
      [](const Eigen::MatrixXd& X, const std::vector<int>& w) {
        const CovariateMatrix cov(X);
        std::vector<std::uint8_t> ind(w.begin(), w.end());
        const Allocation alloc(std::move(ind));
        const BalanceCriterion crit(factor_covariance(finite_population_covariance(cov)),
                                    std::numeric_limits<double>::infinity(), alloc.treated_count(),
                                    alloc.control_count());
        return mahalanobis(cov, alloc, crit);
      },
      py::arg("X"), py::arg("w"), "Balance statistic (n1 n0 / n) d' S^{-1} d.");

  m.def(
      "draw_allocation",
      [](const Eigen::MatrixXd& X, std::uint64_t seed, double p_accept, int n1) {
        const CovariateMatrix cov(X);
        if (n1 <= 0) n1 = cov.units() / 2;
        const BalanceCriterion crit = build_criterion(cov, n1, p_accept);
        RngStream stream(seed);
        const AcceptedAllocation acc =
            draw_accepted_allocation(stream, cov, crit, default_max_tries(p_accept));
        py::dict d;
        d["w"] = to_list(acc.allocation);
        d["tries"] = acc.tries;
        d["distance"] = acc.distance;
        d["threshold"] = crit.threshold();
        return d;
      },
      py::arg("X"), py::arg("seed"), py::arg("p_accept") = 0.01, py::arg("n1") = 0);

  m.def(
      "enumerate_acceptance_set",
      [](const Eigen::MatrixXd& X, int n1, double threshold) {
        const CovariateMatrix cov(X);
        const BalanceCriterion crit(factor_covariance(finite_population_covariance(cov)), threshold,
                                    n1, cov.units() - n1);
        std::vector<std::vector<int>> out;
        for (const auto& a : enumerate_acceptance_set(cov, crit)) out.push_back(to_list(a));
        return out;
      },
      py::arg("X"), py::arg("n1"), py::arg("threshold"));

  m.def(
      "neyman_interval",
      [](const Eigen::MatrixXd& X, const std::vector<int>& w, const Eigen::VectorXd& y) {
        return interval_dict(neyman_interval(make_data(X, w, y)));
      },
      py::arg("X"), py::arg("w"), py::arg("y"));

  m.def(
      "adjusted_interval",
      [](const Eigen::MatrixXd& X, const std::vector<int>& w, const Eigen::VectorXd& y,
         bool interaction, const std::string& variant) {
        return interval_dict(adjusted_interval(make_data(X, w, y), interaction, parse_variant(variant)));
      },
      py::arg("X"), py::arg("w"), py::arg("y"), py::arg("interaction"),
      py::arg("variant") = "EHW");

  m.def(
      "ldr_interval",
      [](const Eigen::MatrixXd& X, const std::vector<int>& w, const Eigen::VectorXd& y,
         std::uint64_t seed, double p_accept, int n_draws) {
        const ObservedData data = make_data(X, w, y);
        const BalanceCriterion crit = build_criterion(data.X, data.w.treated_count(), p_accept);
        RngStream stream(seed);
        return interval_dict(ldr_interval(data, crit, stream, n_draws));
      },
      py::arg("X"), py::arg("w"), py::arg("y"), py::arg("seed"), py::arg("p_accept") = 0.01,
      py::arg("n_draws") = 100000);

  m.def(
      "bayes_interval",
      [](const Eigen::MatrixXd& X, const std::vector<int>& w, const Eigen::VectorXd& y,
         const std::string& model, std::uint64_t seed, int H, int burn_in) {
        RngStream stream(seed);
        GibbsOptions opts;
        opts.H = H;
        opts.burn_in = burn_in;
        return interval_dict(bayes_interval(stream, make_data(X, w, y), parse_model(model), {}, opts));
      },
      py::arg("X"), py::arg("w"), py::arg("y"), py::arg("model"), py::arg("seed"),
      py::arg("H") = 2000, py::arg("burn_in") = 500);

  m.def(
      "analyze",
      [](const Eigen::MatrixXd& X, const std::vector<int>& w, const Eigen::VectorXd& y,
         std::uint64_t seed, double p_accept, const std::vector<std::string>& methods) {
        const ObservedData data = make_data(X, w, y);
        const BalanceCriterion crit = build_criterion(data.X, data.w.treated_count(), p_accept);
        const RngStream master(seed);
        QuantileCache cache(ldr_stream(master), 100000);
        const auto chosen = methods.empty() ? std::vector<Method>(kAllMethods.begin(), kAllMethods.end())
                                            : parse_methods(methods);
        py::list out;
        for (const auto& est : evaluate_methods(data, crit, chosen, master.derive(1), cache, {}))
          out.append(interval_dict(est));
        return out;
      },
      py::arg("X"), py::arg("w"), py::arg("y"), py::arg("seed"), py::arg("p_accept") = 0.01,
      py::arg("methods") = std::vector<std::string>{});

  m.def(
      "generate_dataset",
      [](std::uint64_t seed, int n, int K, const std::string& dgp, const std::string& cov_dist,
         double r0_sq, const std::string& lambda_mode, double c) {
        DgpConfig cfg;
        cfg.dgp = parse_dgp(dgp);
        cfg.n = n;
        cfg.K = K;
        cfg.cov_dist = parse_cov_dist(cov_dist);
        cfg.r0_sq = r0_sq;
        cfg.lambda_mode = parse_lambda_mode(lambda_mode);
        cfg.c = c;
        const Dataset data = generate_dataset(RngStream(seed), cfg);
        py::dict d;
        d["X"] = data.X.values();
        d["y0"] = data.outcomes.y0;
        d["y1"] = data.outcomes.y1;
        d["sate"] = data.outcomes.sate;
        return d;
      },
      py::arg("seed"), py::arg("n") = 50, py::arg("K") = 3, py::arg("dgp") = "DGP1",
      py::arg("cov_dist") = "normal01", py::arg("r0_sq") = 0.5, py::arg("lambda_mode") = "zero",
      py::arg("c") = 0.0);

  m.def(
      "run_grid",
      [](std::uint64_t seed, int n, int K, int datasets, int experiments,
         const std::vector<std::string>& methods, int workers) {
        FactorGrid grid;
        grid.n = n;
        grid.K = K;
        grid.datasets_per_cell = datasets;
        grid.experiments_per_dataset = experiments;
        if (!methods.empty()) grid.methods = parse_methods(methods);
        std::vector<ResultRecord> records;
        {
          py::gil_scoped_release release;
          records = run_grid(RngStream(seed), grid, workers);
        }
        py::dict out;
        py::dict length, coverage;
        for (const auto& me : main_effects_coverage(records, grid.methods))
          coverage[py::str(std::string(to_string(me.method)))] = me.value;
        if (std::find(grid.methods.begin(), grid.methods.end(), Method::Neyman) != grid.methods.end())
          for (const auto& me : main_effects_length(records, grid.methods))
            length[py::str(std::string(to_string(me.method)))] = me.value;
        out["records"] = records.size();
        out["main_effects_length"] = length;
        out["main_effects_coverage"] = coverage;
        return out;
      },
      py::arg("seed"), py::arg("n") = 50, py::arg("K") = 3, py::arg("datasets") = 2,
      py::arg("experiments") = 20, py::arg("methods") = std::vector<std::string>{},
      py::arg("workers") = 1);
}
