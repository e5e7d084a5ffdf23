#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "trendsense/did2x2.hpp"
#include "trendsense/didmulti.hpp"
#include "trendsense/errors.hpp"
#include "trendsense/learners.hpp"
#include "trendsense/panel.hpp"
#include "trendsense/sensitivity.hpp"
#include "trendsense/simulation.hpp"

namespace py = pybind11;
using namespace trendsense;

namespace {

CsvSchema make_schema(const std::string& unit, const std::string& time,
                      const std::string& outcome, const std::string& first_treat,
                      const std::string& treat_indicator,
                      const std::vector<std::string>& covariates) {
  CsvSchema s;
  s.unit = unit;
  s.time = time;
  s.outcome = outcome;
  s.first_treat = treat_indicator.empty() ? first_treat : "";
  s.treat_indicator = treat_indicator;
  s.covariates = covariates;
  return s;
}

ControlGroup control_from_string(const std::string& s) {
  if (s == "never") return ControlGroup::kNeverTreated;
  if (s == "notyet") return ControlGroup::kNotYetTreated;
  throw InvalidArgument("control must be 'never' or 'notyet'");
}

LearnerSpec spec_from_kwargs(const std::string& outcome, double ridge_lambda, int folds,
                             bool calibrate, uint64_t seed) {
  LearnerSpec spec;
  if (outcome == "ols")
    spec.outcome = LearnerSpec::Outcome::kOls;
  else if (outcome == "ridge")
    spec.outcome = LearnerSpec::Outcome::kRidge;
  else
    throw InvalidArgument("outcome learner must be 'ols' or 'ridge'");
  spec.ridge_lambda = ridge_lambda;
  spec.folds = folds;
  spec.calibrate = calibrate;
  spec.seed = seed;
  return spec;
}

py::dict stats_dict(const std::vector<std::pair<std::string, SummaryStat>>& stats) {
  py::dict d;
  for (const auto& [name, s] : stats) d[name.c_str()] = py::make_tuple(s.mean, s.sd);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "ATT estimation and parallel-trends sensitivity analysis";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      std::string msg = e.kind + ": " + e.what();
      if (e.input_error)
        PyErr_SetString(PyExc_ValueError, msg.c_str());
      else
        PyErr_SetString(PyExc_RuntimeError, msg.c_str());
    }
  });

  py::class_<PanelDataset>(m, "PanelDataset")
      .def_readonly("unit_ids", &PanelDataset::unit_ids)
      .def_readonly("periods", &PanelDataset::periods)
      .def_readonly("outcomes", &PanelDataset::outcomes)
      .def_readonly("covariates", &PanelDataset::covariates)
      .def_readonly("covariate_names", &PanelDataset::covariate_names)
      .def_readonly("first_treatment", &PanelDataset::first_treatment)
      .def("n_units", &PanelDataset::n_units)
      .def("n_periods", &PanelDataset::n_periods)
      .def("validate", &PanelDataset::validate);

  m.attr("NEVER") = kNever;

  m.def(
      "load_csv",
      [](const std::string& path, const std::string& unit, const std::string& time,
         const std::string& outcome, const std::string& first_treat,
         const std::string& treat_indicator, const std::vector<std::string>& covariates) {
        return load_csv(path,
                        make_schema(unit, time, outcome, first_treat, treat_indicator,
                                    covariates));
      },
      py::arg("path"), py::arg("unit") = "unit", py::arg("time") = "time",
      py::arg("outcome") = "y", py::arg("first_treat") = "g", py::arg("treat_indicator") = "",
      py::arg("covariates") = std::vector<std::string>{});
  m.def(
      "save_csv",
      [](const PanelDataset& ds, const std::string& path) { save_csv(ds, path); },
      py::arg("dataset"), py::arg("path"));

  py::class_<TwoByTwoView>(m, "TwoByTwoView")
      .def_readonly("delta_y", &TwoByTwoView::delta_y)
      .def_readonly("treat", &TwoByTwoView::treat)
      .def_readonly("xmat", &TwoByTwoView::xmat)
      .def_readonly("covariate_names", &TwoByTwoView::covariate_names)
      .def_readonly("n_treated", &TwoByTwoView::n_treated)
      .def_readonly("n_control", &TwoByTwoView::n_control);

  m.def("canonical_2x2", &canonical_2x2, py::arg("dataset"));

  py::class_<AttEstimate>(m, "AttEstimate")
      .def_readonly("theta_hat", &AttEstimate::theta_hat)
      .def_readonly("se", &AttEstimate::se)
      .def_readonly("n", &AttEstimate::n)
      .def_readonly("psi", &AttEstimate::psi)
      .def_readonly("riesz", &AttEstimate::riesz)
      .def_readonly("normalized", &AttEstimate::normalized);

  m.def(
      "att_2x2",
      [](const PanelDataset& ds, const std::string& outcome, double ridge_lambda, int folds,
         bool calibrate, uint64_t seed, bool normalized) {
        TwoByTwoView view = canonical_2x2(ds);
        LearnerSpec spec = spec_from_kwargs(outcome, ridge_lambda, folds, calibrate, seed);
        return att_dml(view, crossfit(view, spec), normalized);
      },
      py::arg("dataset"), py::arg("outcome") = "ols", py::arg("ridge_lambda") = 1.0,
      py::arg("folds") = 5, py::arg("calibrate") = false, py::arg("seed") = 0,
      py::arg("normalized") = true);

  m.def(
      "confidence_interval",
      [](const AttEstimate& est, double level, const std::string& sides) {
        Sides s = sides == "two"     ? Sides::kTwo
                  : sides == "lower" ? Sides::kLower
                  : sides == "upper" ? Sides::kUpper
                                     : throw InvalidArgument("sides must be two/lower/upper");
        Interval iv = confidence_interval(est, level, s);
        return py::make_tuple(iv.lo, iv.hi);
      },
      py::arg("estimate"), py::arg("level"), py::arg("sides") = "two");

  py::class_<GtResult>(m, "GtResult")
      .def_property_readonly("g", [](const GtResult& r) { return r.spec.g; })
      .def_property_readonly("t_pre", [](const GtResult& r) { return r.spec.t_pre; })
      .def_property_readonly("t_eval", [](const GtResult& r) { return r.spec.t_eval; })
      .def_readonly("estimate", &GtResult::estimate)
      .def_readonly("n_treated", &GtResult::n_treated)
      .def_readonly("n_control", &GtResult::n_control)
      .def_readonly("fragile", &GtResult::fragile);

  py::class_<GtBatch>(m, "GtBatch")
      .def_readonly("results", &GtBatch::results)
      .def_property_readonly("skipped", [](const GtBatch& b) {
        py::list out;
        for (const auto& s : b.skipped) out.append(py::make_tuple(s.g, s.t_eval, s.reason));
        return out;
      });

  m.def(
      "att_gt_all",
      [](const PanelDataset& ds, int64_t delta, const std::string& control,
         const std::string& outcome, double ridge_lambda, int folds, bool calibrate,
         uint64_t seed, int threads) {
        LearnerSpec spec = spec_from_kwargs(outcome, ridge_lambda, folds, calibrate, seed);
        return att_gt_all(ds, delta, control_from_string(control), spec, threads);
      },
      py::arg("dataset"), py::arg("delta") = 0, py::arg("control") = "never",
      py::arg("outcome") = "ols", py::arg("ridge_lambda") = 1.0, py::arg("folds") = 5,
      py::arg("calibrate") = false, py::arg("seed") = 0, py::arg("threads") = 1);

  py::class_<SensitivityElements>(m, "SensitivityElements")
      .def_readonly("sigma2", &SensitivityElements::sigma2)
      .def_readonly("nu2", &SensitivityElements::nu2)
      .def_readonly("theta_hat", &SensitivityElements::theta_hat)
      .def_readonly("se", &SensitivityElements::se)
      .def_readonly("n", &SensitivityElements::n)
      .def_readonly("degenerate_sigma", &SensitivityElements::degenerate_sigma);

  m.def("elements", &elements, py::arg("estimate"));

  py::class_<Scenario>(m, "Scenario")
      .def(py::init([](double cf_y, double cf_d, double rho, const std::string& label) {
             Scenario sc{cf_y, cf_d, rho, label};
             sc.validate();
             return sc;
           }),
           py::arg("cf_y"), py::arg("cf_d"), py::arg("rho") = 1.0, py::arg("label") = "manual")
      .def_readonly("cf_y", &Scenario::cf_y)
      .def_readonly("cf_d", &Scenario::cf_d)
      .def_readonly("rho", &Scenario::rho)
      .def_readonly("label", &Scenario::label);

  py::class_<SensitivityReport>(m, "SensitivityReport")
      .def_readonly("theta", &SensitivityReport::theta)
      .def_readonly("se", &SensitivityReport::se)
      .def_readonly("theta_minus", &SensitivityReport::theta_minus)
      .def_readonly("theta_plus", &SensitivityReport::theta_plus)
      .def_readonly("se_minus", &SensitivityReport::se_minus)
      .def_readonly("se_plus", &SensitivityReport::se_plus)
      .def_readonly("ell_minus", &SensitivityReport::ell_minus)
      .def_readonly("u_plus", &SensitivityReport::u_plus)
      .def_readonly("rv", &SensitivityReport::rv)
      .def_readonly("rv_a", &SensitivityReport::rv_a)
      .def_readonly("scenario", &SensitivityReport::scenario)
      .def_readonly("h0", &SensitivityReport::h0)
      .def_readonly("level", &SensitivityReport::level);

  m.def("adjusted_bounds", &adjusted_bounds, py::arg("elements"), py::arg("scenario"),
        py::arg("level"), py::arg("h0") = 0.0);
  m.def("robustness_value", &robustness_value, py::arg("elements"), py::arg("h0"),
        py::arg("rho") = 1.0);
  m.def("robustness_value_a", &robustness_value_a, py::arg("elements"), py::arg("h0"),
        py::arg("rho"), py::arg("level"));

  m.def(
      "benchmark_2x2",
      [](const PanelDataset& ds, const std::vector<std::string>& leave_out,
         const std::string& outcome, double ridge_lambda, int folds, bool calibrate,
         uint64_t seed) {
        TwoByTwoView view = canonical_2x2(ds);
        return benchmark(view, spec_from_kwargs(outcome, ridge_lambda, folds, calibrate, seed),
                         leave_out);
      },
      py::arg("dataset"), py::arg("leave_out"), py::arg("outcome") = "ols",
      py::arg("ridge_lambda") = 1.0, py::arg("folds") = 5, py::arg("calibrate") = false,
      py::arg("seed") = 0);

  m.def(
      "contour_grid",
      [](const SensitivityElements& el, double cf_y_max, double cf_d_max, int n_grid,
         const std::string& side, py::object level, double rho) {
        std::optional<double> lv;
        if (!level.is_none()) lv = level.cast<double>();
        BoundSide bs = side == "upper" ? BoundSide::kUpper : BoundSide::kLower;
        ContourGrid g = contour_grid(el, cf_y_max, cf_d_max, n_grid, bs, lv, rho);
        py::dict d;
        d["cf_y"] = g.cf_y_values;
        d["cf_d"] = g.cf_d_values;
        d["values"] = g.values;
        d["theta"] = g.theta_hat;
        return d;
      },
      py::arg("elements"), py::arg("cf_y_max"), py::arg("cf_d_max"), py::arg("n_grid") = 21,
      py::arg("side") = "lower", py::arg("level") = py::none(), py::arg("rho") = 1.0);

  py::class_<DgpConfig>(m, "DgpConfig")
      .def(py::init<>())
      .def_readwrite("theta", &DgpConfig::theta)
      .def_readwrite("gamma_a", &DgpConfig::gamma_a)
      .def_readwrite("beta_a", &DgpConfig::beta_a)
      .def_readwrite("sigma_eps", &DgpConfig::sigma_eps)
      .def_readwrite("n", &DgpConfig::n)
      .def_readwrite("seed", &DgpConfig::seed)
      .def_readwrite("use_z_transform", &DgpConfig::use_z_transform)
      .def_readwrite("divide_by_variance", &DgpConfig::divide_by_variance)
      .def_readwrite("clip_lo", &DgpConfig::clip_lo)
      .def_readwrite("clip_hi", &DgpConfig::clip_hi);

  m.def("draw_sample", &draw_sample, py::arg("config"));

  py::class_<OracleScenario>(m, "OracleScenario")
      .def_readonly("cf_y", &OracleScenario::cf_y)
      .def_readonly("cf_d", &OracleScenario::cf_d)
      .def_readonly("rho", &OracleScenario::rho)
      .def_readonly("s", &OracleScenario::s)
      .def_readonly("theta_short", &OracleScenario::theta_short)
      .def_readonly("theta_long", &OracleScenario::theta_long);

  py::class_<CalibrationResult>(m, "CalibrationResult")
      .def_readonly("gamma_a", &CalibrationResult::gamma_a)
      .def_readonly("beta_a", &CalibrationResult::beta_a)
      .def_readonly("oracle", &CalibrationResult::oracle);

  m.def("calibrate_confounding", &calibrate_confounding, py::arg("target_cf"),
        py::arg("superpop_n"), py::arg("tol") = 0.005, py::arg("seed") = 0,
        py::arg("base") = DgpConfig{});
  m.def("evaluate_oracle", &evaluate_oracle, py::arg("base"), py::arg("superpop_n"),
        py::arg("seed") = 0);

  py::class_<SimTables>(m, "SimTables")
      .def_readonly("level", &SimTables::level)
      .def_readonly("seed", &SimTables::seed)
      .def_readonly("reps_requested", &SimTables::reps_requested)
      .def_readonly("reps_done", &SimTables::reps_done)
      .def_readonly("failures", &SimTables::failures)
      .def_property_readonly("point_stats",
                             [](const SimTables& t) { return stats_dict(t.point_stats); })
      .def_property_readonly("limit_stats",
                             [](const SimTables& t) { return stats_dict(t.limit_stats); })
      .def_property_readonly("coverage", [](const SimTables& t) {
        py::dict d;
        for (const auto& [name, v] : t.coverage) d[name.c_str()] = v;
        return d;
      });

  m.def("run_monte_carlo", &run_monte_carlo, py::arg("config"), py::arg("oracle"),
        py::arg("reps"), py::arg("level"), py::arg("seed"), py::arg("threads") = 1,
        py::arg("normalized") = false);
}
