#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "trendsense/did2x2.hpp"
#include "trendsense/didmulti.hpp"
#include "trendsense/errors.hpp"
#include "trendsense/learners.hpp"
#include "trendsense/panel.hpp"
#include "trendsense/report_io.hpp"
#include "trendsense/rng.hpp"
#include "trendsense/sensitivity.hpp"
#include "trendsense/simulation.hpp"

namespace ts = trendsense;
using ts::json;

namespace {

constexpr int64_t kUnset = std::numeric_limits<int64_t>::min();
const double kNaN = std::numeric_limits<double>::quiet_NaN();

/* Every option lives here. The JSON config file uses the same keys that
 * run_config embeds, so a run can be reproduced from any emitted report. */
struct RunConfig {
  // global
  uint64_t seed = 0;
  int threads = 0;  // 0 = resolve from TRENDSENSE_THREADS / hardware
  std::string out = ".";
  std::string config;
  std::string format = "json";  // json|csv|both

  // input data + column mapping
  std::string data;
  std::string unit_col = "unit";
  std::string time_col = "time";
  std::string outcome_col = "y";
  std::string first_treat_col = "g";
  std::string treat_col;
  std::vector<std::string> covariates;

  // learners
  std::string outcome_learner = "ols";
  double ridge_lambda = 1.0;
  int folds = 5;
  bool calibrate_propensity = false;

  // design
  std::string control = "never";  // never|notyet
  int64_t delta = 0;
  double level = 0.9;
  bool unnormalized = false;

  // cell selection
  int64_t g = kUnset;
  int64_t t_eval = kUnset;
  int64_t t_pre = kUnset;

  // scenario
  double cf_y = 0.0;
  double cf_d = 0.0;
  double rho = 1.0;
  double h0 = 0.0;
  std::string label;
  std::string scenario_from;  // ""|pretest|benchmark
  std::vector<std::string> leave_out;
  double pretest_k = 1.0;

  // contour
  double cf_y_max = 0.3;
  double cf_d_max = 0.3;
  int grid = 21;
  std::string side = "lower";   // lower|upper
  double contour_level = -1.0;  // <= 0: point bounds
  bool svg = false;

  // simulation / calibration
  std::vector<int> sizes = {1000};
  int reps = 500;
  double target = 0.1;
  double gamma_a = kNaN;
  double beta_a = kNaN;
  int superpop_n = 1000000;
  double tol = 0.005;
  double sigma_eps = 1.5;
  double theta = 5.0;
  bool raw_features = false;
  bool divide_by_variance = false;
  bool normalized = false;
};

void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ts::InvalidArgument("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw ts::InvalidArgument("config file is not valid JSON: " + std::string(e.what()));
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    try {
      if (k == "seed") rc.seed = v.get<uint64_t>();
      else if (k == "threads") rc.threads = v.get<int>();
      else if (k == "out") rc.out = v.get<std::string>();
      else if (k == "format") rc.format = v.get<std::string>();
      else if (k == "data") rc.data = v.get<std::string>();
      else if (k == "unit_col") rc.unit_col = v.get<std::string>();
      else if (k == "time_col") rc.time_col = v.get<std::string>();
      else if (k == "outcome_col") rc.outcome_col = v.get<std::string>();
      else if (k == "first_treat_col") rc.first_treat_col = v.get<std::string>();
      else if (k == "treat_col") rc.treat_col = v.get<std::string>();
      else if (k == "covariates") rc.covariates = v.get<std::vector<std::string>>();
      else if (k == "outcome_learner") rc.outcome_learner = v.get<std::string>();
      else if (k == "ridge_lambda") rc.ridge_lambda = v.get<double>();
      else if (k == "folds") rc.folds = v.get<int>();
      else if (k == "calibrate_propensity") rc.calibrate_propensity = v.get<bool>();
      else if (k == "control") rc.control = v.get<std::string>();
      else if (k == "delta") rc.delta = v.get<int64_t>();
      else if (k == "level") rc.level = v.get<double>();
      else if (k == "unnormalized") rc.unnormalized = v.get<bool>();
      else if (k == "g") rc.g = v.is_null() ? kUnset : v.get<int64_t>();
      else if (k == "t_eval") rc.t_eval = v.is_null() ? kUnset : v.get<int64_t>();
      else if (k == "t_pre") rc.t_pre = v.is_null() ? kUnset : v.get<int64_t>();
      else if (k == "cf_y") rc.cf_y = v.get<double>();
      else if (k == "cf_d") rc.cf_d = v.get<double>();
      else if (k == "rho") rc.rho = v.get<double>();
      else if (k == "h0") rc.h0 = v.get<double>();
      else if (k == "label") rc.label = v.get<std::string>();
      else if (k == "scenario_from") rc.scenario_from = v.get<std::string>();
      else if (k == "leave_out") rc.leave_out = v.get<std::vector<std::string>>();
      else if (k == "pretest_k") rc.pretest_k = v.get<double>();
      else if (k == "cf_y_max") rc.cf_y_max = v.get<double>();
      else if (k == "cf_d_max") rc.cf_d_max = v.get<double>();
      else if (k == "grid") rc.grid = v.get<int>();
      else if (k == "side") rc.side = v.get<std::string>();
      else if (k == "contour_level") rc.contour_level = v.is_null() ? -1.0 : v.get<double>();
      else if (k == "svg") rc.svg = v.get<bool>();
      else if (k == "n") rc.sizes = v.is_array() ? v.get<std::vector<int>>()
                                                 : std::vector<int>{v.get<int>()};
      else if (k == "reps") rc.reps = v.get<int>();
      else if (k == "target") rc.target = v.get<double>();
      else if (k == "gamma_a") rc.gamma_a = v.is_null() ? kNaN : v.get<double>();
      else if (k == "beta_a") rc.beta_a = v.is_null() ? kNaN : v.get<double>();
      else if (k == "superpop_n") rc.superpop_n = v.get<int>();
      else if (k == "tol") rc.tol = v.get<double>();
      else if (k == "sigma_eps") rc.sigma_eps = v.get<double>();
      else if (k == "theta") rc.theta = v.get<double>();
      else if (k == "raw_features") rc.raw_features = v.get<bool>();
      else if (k == "divide_by_variance") rc.divide_by_variance = v.get<bool>();
      else if (k == "normalized") rc.normalized = v.get<bool>();
      else if (k == "command" || k == "schema_version" || k == "run_id") continue;
      else throw ts::InvalidArgument("config file: unknown key '" + k + "'");
    } catch (const json::exception& e) {
      throw ts::InvalidArgument("config file: bad value for '" + k + "': " + e.what());
    }
  }
}

json opt_i64(int64_t v) { return v == kUnset ? json(nullptr) : json(v); }
json opt_real(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json global_config(const RunConfig& rc, int threads) {
  return json{{"seed", rc.seed}, {"threads", threads}, {"out", rc.out}, {"format", rc.format}};
}

json data_config(const RunConfig& rc) {
  return json{{"data", rc.data},
              {"unit_col", rc.unit_col},
              {"time_col", rc.time_col},
              {"outcome_col", rc.outcome_col},
              {"first_treat_col", rc.first_treat_col},
              {"treat_col", rc.treat_col},
              {"covariates", rc.covariates}};
}

json learner_config(const RunConfig& rc) {
  return json{{"outcome_learner", rc.outcome_learner},
              {"ridge_lambda", rc.ridge_lambda},
              {"folds", rc.folds},
              {"calibrate_propensity", rc.calibrate_propensity}};
}

json design_config(const RunConfig& rc) {
  return json{{"control", rc.control},
              {"delta", rc.delta},
              {"level", rc.level},
              {"unnormalized", rc.unnormalized},
              {"g", opt_i64(rc.g)},
              {"t_eval", opt_i64(rc.t_eval)},
              {"t_pre", opt_i64(rc.t_pre)}};
}

void merge(json& dst, const json& src) {
  for (auto it = src.begin(); it != src.end(); ++it) dst[it.key()] = it.value();
}

struct Outputs {
  std::string dir;
  std::vector<std::string> written;

  std::string write(const std::string& name, const std::string& content) {
    std::filesystem::create_directories(dir);
    std::string path = (std::filesystem::path(dir) / name).string();
    ts::write_text_file(path, content);
    written.push_back(path);
    return path;
  }
  void report() const {
    for (const auto& p : written) std::printf("wrote %s\n", p.c_str());
  }
};

json base_doc(const std::string& command, const json& run_config) {
  json doc;
  doc["schema_version"] = ts::kSchemaVersion;
  doc["command"] = command;
  doc["run_config"] = run_config;
  doc["run_id"] = ts::run_id(run_config);
  return doc;
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("TRENDSENSE_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

ts::LearnerSpec make_learner_spec(const RunConfig& rc) {
  ts::LearnerSpec spec;
  if (rc.outcome_learner == "ols")
    spec.outcome = ts::LearnerSpec::Outcome::kOls;
  else if (rc.outcome_learner == "ridge")
    spec.outcome = ts::LearnerSpec::Outcome::kRidge;
  else
    throw ts::InvalidArgument("unknown outcome learner '" + rc.outcome_learner +
                              "' (expected ols or ridge)");
  spec.ridge_lambda = rc.ridge_lambda;
  spec.folds = rc.folds;
  spec.calibrate = rc.calibrate_propensity;
  spec.seed = rc.seed;
  return spec;
}

ts::ControlGroup parse_control(const std::string& s) {
  if (s == "never") return ts::ControlGroup::kNeverTreated;
  if (s == "notyet") return ts::ControlGroup::kNotYetTreated;
  throw ts::InvalidArgument("unknown control group '" + s + "' (expected never or notyet)");
}

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0))
    throw ts::InvalidArgument("level must be strictly between 0 and 1");
}

bool want_json(const RunConfig& rc) { return rc.format == "json" || rc.format == "both"; }
bool want_csv(const RunConfig& rc) { return rc.format == "csv" || rc.format == "both"; }

ts::PanelDataset load_panel(const RunConfig& rc) {
  if (rc.data.empty()) throw ts::InvalidArgument("--data is required");
  ts::CsvSchema schema;
  schema.unit = rc.unit_col;
  schema.time = rc.time_col;
  schema.outcome = rc.outcome_col;
  schema.first_treat = rc.treat_col.empty() ? rc.first_treat_col : "";
  schema.treat_indicator = rc.treat_col;
  schema.covariates = rc.covariates;
  return ts::load_csv(rc.data, schema);
}

// --g/--t-eval select a group-time cell; without them a 2-period panel
// collapses to its canonical 2x2 comparison
ts::TwoByTwoView select_view(const RunConfig& rc, const ts::PanelDataset& ds) {
  if ((rc.g == kUnset) != (rc.t_eval == kUnset))
    throw ts::InvalidArgument("--g and --t-eval must be given together");
  if (rc.g == kUnset) return ts::canonical_2x2(ds);

  ts::GroupTimeSpec spec;
  spec.g = rc.g;
  spec.t_eval = rc.t_eval;
  spec.delta = rc.delta;
  spec.control = parse_control(rc.control);
  if (rc.t_pre != kUnset) {
    spec.t_pre = rc.t_pre;
  } else {
    int it = ds.period_index(rc.t_eval);
    if (it < 0)
      throw ts::InvalidArgument("t_eval " + std::to_string(rc.t_eval) + " is not a panel period");
    if (rc.t_eval < rc.g - rc.delta) {
      if (it == 0) throw ts::NoPrePeriods("no period precedes t_eval");
      spec.t_pre = ds.periods[it - 1];
    } else {
      int64_t best = kUnset;
      for (int64_t t : ds.periods)
        if (t <= rc.g - rc.delta - 1 && (best == kUnset || t > best)) best = t;
      if (best == kUnset)
        throw ts::NoPrePeriods("no pre-treatment period for cohort " + std::to_string(rc.g));
      spec.t_pre = best;
    }
  }
  return ts::gt_subsample(ds, spec);
}

std::vector<ts::GtResult> pre_treatment_cells(const ts::GtBatch& batch, int64_t delta) {
  std::vector<ts::GtResult> pre;
  for (const auto& r : batch.results)
    if (r.spec.t_eval < r.spec.g - delta) pre.push_back(r);
  return pre;
}

ts::Scenario resolve_scenario(const RunConfig& rc, const ts::PanelDataset& ds,
                              const ts::TwoByTwoView& view, const ts::LearnerSpec& lspec,
                              int threads) {
  if (rc.scenario_from == "benchmark") {
    if (rc.leave_out.empty())
      throw ts::InvalidArgument("--scenario-from benchmark requires --leave-out");
    return ts::benchmark(view, lspec, rc.leave_out);  // rho is backed out, not a flag
  }
  if (rc.scenario_from == "pretest") {
    ts::GtBatch batch = ts::att_gt_all(ds, rc.delta, parse_control(rc.control), lspec, threads);
    auto pre = pre_treatment_cells(batch, rc.delta);
    return ts::pretest_scenario(pre, rc.pretest_k, rc.rho);
  }
  if (!rc.scenario_from.empty())
    throw ts::InvalidArgument("unknown --scenario-from '" + rc.scenario_from +
                              "' (expected pretest or benchmark)");
  ts::Scenario sc;
  sc.cf_y = rc.cf_y;
  sc.cf_d = rc.cf_d;
  sc.rho = rc.rho;
  sc.label = rc.label.empty() ? "manual" : rc.label;
  sc.validate();
  return sc;
}

// ---------------------------------------------------------------- commands

int cmd_estimate(const RunConfig& rc, int threads) {
  check_level(rc.level);
  ts::PanelDataset ds = load_panel(rc);
  ts::LearnerSpec lspec = make_learner_spec(rc);
  ts::GtBatch batch = ts::att_gt_all(ds, rc.delta, parse_control(rc.control), lspec, threads);

  json run_config = global_config(rc, threads);
  merge(run_config, data_config(rc));
  merge(run_config, learner_config(rc));
  merge(run_config, design_config(rc));

  Outputs out{rc.out, {}};
  json doc = base_doc("estimate", run_config);
  doc["learners"] = ts::to_json(lspec);
  doc["diagnostics"] = ts::to_json(ts::diagnostics(ds));
  doc["estimates"] = ts::gt_batch_json(batch, rc.level);
  if (want_json(rc)) out.write("estimate.json", dump(doc));
  if (want_csv(rc)) out.write("estimate.csv", ts::gt_batch_csv(batch, rc.level));

  std::printf("group-time ATT estimates (two-sided level %.2f)\n", rc.level);
  for (const auto& r : batch.results) {
    ts::Interval ci = ts::confidence_interval(r.estimate, rc.level, ts::Sides::kTwo);
    std::printf("  g=%lld t=[%lld->%lld]  theta=%8.4f  se=%7.4f  ci=[%8.4f, %8.4f]  n=%d+%d%s\n",
                static_cast<long long>(r.spec.g), static_cast<long long>(r.spec.t_pre),
                static_cast<long long>(r.spec.t_eval), r.estimate.theta_hat, r.estimate.se,
                ci.lo, ci.hi, r.n_treated, r.n_control, r.fragile ? "  (fragile)" : "");
  }
  for (const auto& s : batch.skipped)
    std::printf("  g=%lld t_eval=%lld skipped: %s\n", static_cast<long long>(s.g),
                static_cast<long long>(s.t_eval), s.reason.c_str());
  out.report();
  return 0;
}

int cmd_sensitivity(const RunConfig& rc, int threads) {
  check_level(rc.level);
  ts::PanelDataset ds = load_panel(rc);
  ts::LearnerSpec lspec = make_learner_spec(rc);
  ts::TwoByTwoView view = select_view(rc, ds);
  ts::NuisanceFit fit = ts::crossfit(view, lspec);
  ts::AttEstimate att = ts::att_dml(view, fit, !rc.unnormalized);
  ts::SensitivityElements el = ts::elements(att);
  ts::Scenario sc = resolve_scenario(rc, ds, view, lspec, threads);
  ts::SensitivityReport rep = ts::adjusted_bounds(el, sc, rc.level, rc.h0);

  json run_config = global_config(rc, threads);
  merge(run_config, data_config(rc));
  merge(run_config, learner_config(rc));
  merge(run_config, design_config(rc));
  merge(run_config, json{{"cf_y", rc.cf_y},
                         {"cf_d", rc.cf_d},
                         {"rho", rc.rho},
                         {"h0", rc.h0},
                         {"label", rc.label},
                         {"scenario_from", rc.scenario_from},
                         {"leave_out", rc.leave_out},
                         {"pretest_k", rc.pretest_k}});

  Outputs out{rc.out, {}};
  json doc = base_doc("sensitivity", run_config);
  doc["learners"] = ts::to_json(lspec);
  doc["elements"] = json{{"sigma2", el.sigma2},
                         {"nu2", el.nu2},
                         {"n", el.n},
                         {"degenerate_sigma", el.degenerate_sigma}};
  doc["report"] = ts::to_json(rep);
  out.write("sensitivity.json", dump(doc));
  if (want_csv(rc)) {
    std::ostringstream csv;
    csv << "theta,se,theta_minus,theta_plus,ell_minus,u_plus,rv,rv_a,cf_y,cf_d,rho,h0,level\n"
        << ts::format_double(rep.theta) << ',' << ts::format_double(rep.se) << ','
        << ts::format_double(rep.theta_minus) << ',' << ts::format_double(rep.theta_plus) << ','
        << ts::format_double(rep.ell_minus) << ',' << ts::format_double(rep.u_plus) << ','
        << ts::format_double(rep.rv) << ',' << ts::format_double(rep.rv_a) << ','
        << ts::format_double(sc.cf_y) << ',' << ts::format_double(sc.cf_d) << ','
        << ts::format_double(sc.rho) << ',' << ts::format_double(rep.h0) << ','
        << ts::format_double(rep.level) << '\n';
    out.write("sensitivity.csv", csv.str());
  }

  std::printf("ATT %.4f (se %.4f), n=%d\n", rep.theta, rep.se, el.n);
  std::printf("scenario %s: cf_y=%.4g cf_d=%.4g rho=%.4g\n", sc.label.c_str(), sc.cf_y, sc.cf_d,
              sc.rho);
  std::printf("bias-adjusted range  [%.4f, %.4f]\n", rep.theta_minus, rep.theta_plus);
  std::printf("confidence bounds    [%.4f, %.4f]  (one-sided level %.2f)\n", rep.ell_minus,
              rep.u_plus, rep.level);
  if (std::isfinite(rep.rv))
    std::printf("robustness values    RV=%.4f  RV_a=%.4f  (h0=%.4g)\n", rep.rv, rep.rv_a, rep.h0);
  else
    std::printf("robustness values    undefined for this scenario\n");
  if (el.degenerate_sigma) std::printf("warning: residual variance is degenerate\n");
  out.report();
  return 0;
}

int cmd_benchmark(const RunConfig& rc, int threads) {
  ts::PanelDataset ds = load_panel(rc);
  if (rc.leave_out.empty()) throw ts::InvalidArgument("--leave-out is required");
  ts::LearnerSpec lspec = make_learner_spec(rc);
  ts::TwoByTwoView view = select_view(rc, ds);
  ts::Scenario sc = ts::benchmark(view, lspec, rc.leave_out);

  json run_config = global_config(rc, threads);
  merge(run_config, data_config(rc));
  merge(run_config, learner_config(rc));
  merge(run_config, design_config(rc));
  merge(run_config, json{{"leave_out", rc.leave_out}});

  Outputs out{rc.out, {}};
  json doc = base_doc("benchmark", run_config);
  doc["learners"] = ts::to_json(lspec);
  doc["scenario"] = ts::to_json(sc);
  out.write("benchmark.json", dump(doc));
  if (want_csv(rc)) {
    std::ostringstream csv;
    csv << "label,cf_y,cf_d,rho\n"
        << sc.label << ',' << ts::format_double(sc.cf_y) << ',' << ts::format_double(sc.cf_d)
        << ',' << ts::format_double(sc.rho) << '\n';
    out.write("benchmark.csv", csv.str());
  }
  std::printf("benchmark scenario %s: cf_y=%.4g cf_d=%.4g rho=%.4g\n", sc.label.c_str(), sc.cf_y,
              sc.cf_d, sc.rho);
  out.report();
  return 0;
}

int cmd_pretest(const RunConfig& rc, int threads) {
  check_level(rc.level);
  ts::PanelDataset ds = load_panel(rc);
  ts::LearnerSpec lspec = make_learner_spec(rc);
  ts::GtBatch batch = ts::att_gt_all(ds, rc.delta, parse_control(rc.control), lspec, threads);
  ts::GtBatch pre;
  pre.results = pre_treatment_cells(batch, rc.delta);
  pre.skipped = batch.skipped;
  ts::Scenario sc = ts::pretest_scenario(pre.results, rc.pretest_k, rc.rho);

  json run_config = global_config(rc, threads);
  merge(run_config, data_config(rc));
  merge(run_config, learner_config(rc));
  merge(run_config, design_config(rc));
  merge(run_config, json{{"pretest_k", rc.pretest_k}, {"rho", rc.rho}});

  Outputs out{rc.out, {}};
  json doc = base_doc("pretest", run_config);
  doc["learners"] = ts::to_json(lspec);
  doc["scenario"] = ts::to_json(sc);
  doc["pre_treatment_cells"] = ts::gt_batch_json(pre, rc.level);
  out.write("pretest.json", dump(doc));
  if (want_csv(rc)) out.write("pretest.csv", ts::gt_batch_csv(pre, rc.level));

  std::printf("pre-treatment cells: %zu\n", pre.results.size());
  std::printf("pretest scenario %s: cf_y=%.4g cf_d=%.4g rho=%.4g\n", sc.label.c_str(), sc.cf_y,
              sc.cf_d, sc.rho);
  out.report();
  return 0;
}

int cmd_contour(const RunConfig& rc, int threads) {
  ts::PanelDataset ds = load_panel(rc);
  ts::LearnerSpec lspec = make_learner_spec(rc);
  ts::TwoByTwoView view = select_view(rc, ds);
  ts::NuisanceFit fit = ts::crossfit(view, lspec);
  ts::AttEstimate att = ts::att_dml(view, fit, !rc.unnormalized);
  ts::SensitivityElements el = ts::elements(att);
  ts::BoundSide side = rc.side == "upper" ? ts::BoundSide::kUpper : ts::BoundSide::kLower;
  if (rc.side != "lower" && rc.side != "upper")
    throw ts::InvalidArgument("unknown --side '" + rc.side + "' (expected lower or upper)");
  std::optional<double> level;
  if (rc.contour_level > 0.0) {
    check_level(rc.contour_level);
    level = rc.contour_level;
  }
  ts::ContourGrid grid = ts::contour_grid(el, rc.cf_y_max, rc.cf_d_max, rc.grid, side, level,
                                          rc.rho);

  json run_config = global_config(rc, threads);
  merge(run_config, data_config(rc));
  merge(run_config, learner_config(rc));
  merge(run_config, design_config(rc));
  merge(run_config, json{{"cf_y_max", rc.cf_y_max},
                         {"cf_d_max", rc.cf_d_max},
                         {"grid", rc.grid},
                         {"side", rc.side},
                         {"contour_level", rc.contour_level > 0 ? json(rc.contour_level)
                                                                : json(nullptr)},
                         {"rho", rc.rho},
                         {"svg", rc.svg}});

  Outputs out{rc.out, {}};
  json doc = base_doc("contour", run_config);
  doc["learners"] = ts::to_json(lspec);
  doc["grid"] = ts::contour_json(grid);
  if (want_json(rc)) out.write("contour.json", dump(doc));
  out.write("contour.csv", ts::contour_csv(grid));
  if (rc.svg) out.write("contour.svg", ts::contour_svg(grid));

  std::printf("%s %s over cf_y in [0, %.3g], cf_d in [0, %.3g] (%dx%d)\n",
              rc.side.c_str(), level ? "confidence bound" : "bound", rc.cf_y_max, rc.cf_d_max,
              rc.grid, rc.grid);
  std::printf("theta=%.4f; bound ranges from %.4f to %.4f\n", grid.theta_hat,
              grid.values.minCoeff(), grid.values.maxCoeff());
  out.report();
  return 0;
}

int cmd_calibrate(const RunConfig& rc, int threads) {
  ts::DgpConfig base;
  base.theta = rc.theta;
  base.sigma_eps = rc.sigma_eps;
  base.use_z_transform = !rc.raw_features;
  base.divide_by_variance = rc.divide_by_variance;
  ts::CalibrationResult cal =
      ts::calibrate_confounding(rc.target, rc.superpop_n, rc.tol, rc.seed, base);

  json run_config = global_config(rc, threads);
  merge(run_config, json{{"target", rc.target},
                         {"superpop_n", rc.superpop_n},
                         {"tol", rc.tol},
                         {"sigma_eps", rc.sigma_eps},
                         {"theta", rc.theta},
                         {"raw_features", rc.raw_features},
                         {"divide_by_variance", rc.divide_by_variance}});

  Outputs out{rc.out, {}};
  json doc = base_doc("calibrate", run_config);
  doc["gamma_a"] = cal.gamma_a;
  doc["beta_a"] = cal.beta_a;
  doc["oracle"] = ts::to_json(cal.oracle);
  out.write("calibrate.json", dump(doc));

  std::printf("calibrated loadings: gamma_a=%.6f beta_a=%.6f\n", cal.gamma_a, cal.beta_a);
  std::printf("oracle scenario: cf_y=%.4f cf_d=%.4f rho=%.4f\n", cal.oracle.cf_y, cal.oracle.cf_d,
              cal.oracle.rho);
  std::printf("population ATT: short=%.4f long=%.4f\n", cal.oracle.theta_short,
              cal.oracle.theta_long);
  out.report();
  return 0;
}

int cmd_simulate(const RunConfig& rc, int threads) {
  check_level(rc.level);
  if (rc.reps < 1) throw ts::InvalidArgument("--reps must be at least 1");
  if (rc.sizes.empty()) throw ts::InvalidArgument("--n must name at least one sample size");
  bool have_gamma = std::isfinite(rc.gamma_a), have_beta = std::isfinite(rc.beta_a);
  if (have_gamma != have_beta)
    throw ts::InvalidArgument("--gamma-a and --beta-a must be given together");

  ts::DgpConfig base;
  base.theta = rc.theta;
  base.sigma_eps = rc.sigma_eps;
  base.use_z_transform = !rc.raw_features;
  base.divide_by_variance = rc.divide_by_variance;

  ts::OracleScenario oracle;
  if (have_gamma) {
    base.gamma_a = rc.gamma_a;
    base.beta_a = rc.beta_a;
    oracle = ts::evaluate_oracle(base, rc.superpop_n, rc.seed);
  } else {
    ts::CalibrationResult cal =
        ts::calibrate_confounding(rc.target, rc.superpop_n, rc.tol, rc.seed, base);
    base.gamma_a = cal.gamma_a;
    base.beta_a = cal.beta_a;
    oracle = cal.oracle;
  }

  std::vector<ts::SimTables> runs;
  for (int n : rc.sizes) {
    ts::DgpConfig cfg = base;
    cfg.n = n;
    runs.push_back(ts::run_monte_carlo(cfg, oracle, rc.reps, rc.level,
                                       ts::mix_seed(rc.seed, static_cast<uint64_t>(n)), threads,
                                       rc.normalized));
  }

  json run_config = global_config(rc, threads);
  merge(run_config, json{{"n", rc.sizes},
                         {"reps", rc.reps},
                         {"level", rc.level},
                         {"target", rc.target},
                         {"gamma_a", opt_real(rc.gamma_a)},
                         {"beta_a", opt_real(rc.beta_a)},
                         {"superpop_n", rc.superpop_n},
                         {"tol", rc.tol},
                         {"sigma_eps", rc.sigma_eps},
                         {"theta", rc.theta},
                         {"raw_features", rc.raw_features},
                         {"divide_by_variance", rc.divide_by_variance},
                         {"normalized", rc.normalized}});

  Outputs out{rc.out, {}};
  json doc = base_doc("simulate", run_config);
  doc["gamma_a"] = base.gamma_a;
  doc["beta_a"] = base.beta_a;
  doc["oracle"] = ts::to_json(oracle);
  json jruns = json::array();
  for (const auto& t : runs) jruns.push_back(ts::sim_tables_json(t));
  doc["runs"] = jruns;
  out.write("simulate.json", dump(doc));
  if (want_csv(rc)) {
    out.write("sim_points.csv", ts::sim_point_csv(runs));
    out.write("sim_limits.csv", ts::sim_limit_csv(runs));
    for (const auto& t : runs) {
      std::string tag = "_n" + std::to_string(t.config.n) + ".csv";
      out.write("hist_theta_minus" + tag,
                ts::series_csv(t.hist_theta_minus, "standardized", "density"));
      out.write("hist_ell_minus" + tag,
                ts::series_csv(t.hist_ell_minus, "standardized", "density"));
      out.write("density_theta_s" + tag, ts::series_csv(t.dens_theta_s, "theta", "density"));
      out.write("density_theta_minus" + tag,
                ts::series_csv(t.dens_theta_minus, "theta", "density"));
      out.write("density_rv" + tag, ts::series_csv(t.dens_rv, "rv", "density"));
    }
  }

  std::printf("oracle: cf_y=%.4f cf_d=%.4f rho=%.4f theta_short=%.4f theta_long=%.4f\n",
              oracle.cf_y, oracle.cf_d, oracle.rho, oracle.theta_short, oracle.theta_long);
  for (const auto& t : runs) {
    auto find = [&](const char* key) -> ts::SummaryStat {
      for (const auto& [k, s] : t.point_stats)
        if (k == key) return s;
      return {};
    };
    ts::SummaryStat th_s = find("theta_s"), th_m = find("theta_minus"), rv = find("rv");
    double cover = 0.0;
    for (const auto& [k, v] : t.coverage)
      if (k == "cover_minus") cover = v;
    std::printf("n=%d reps=%d/%d: mean theta_s=%.4f theta_minus=%.4f rv=%.4f cover(ell_minus)=%.3f\n",
                t.config.n, t.reps_done, t.reps_requested, th_s.mean, th_m.mean, rv.mean, cover);
  }
  out.report();
  return 0;
}

void emit_error(const std::string& kind, const std::string& message, int exit_code) {
  json err{{"schema_version", ts::kSchemaVersion},
           {"error", kind},
           {"message", message},
           {"exit_code", exit_code}};
  std::fprintf(stderr, "%s\n", err.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig rc;

  // the config file seeds defaults before CLI11 parses, so flags win
  try {
    for (int i = 1; i < argc; ++i) {
      std::string a = argv[i];
      if (a == "--config" && i + 1 < argc)
        rc.config = argv[i + 1];
      else if (a.rfind("--config=", 0) == 0)
        rc.config = a.substr(9);
    }
    if (!rc.config.empty()) apply_config_file(rc, rc.config);
  } catch (const ts::Error& e) {
    emit_error(e.kind, e.what(), 2);
    return 2;
  }

  CLI::App app{"ATT estimation and parallel-trends sensitivity analysis for panel data"};
  app.require_subcommand(1);
  app.add_option("--seed", rc.seed, "base RNG seed recorded in every output");
  app.add_option("--threads", rc.threads,
                 "worker threads (default: TRENDSENSE_THREADS env, then all cores)");
  app.add_option("--out", rc.out, "output directory");
  app.add_option("--config", rc.config, "JSON config file; flags override its values");
  app.add_option("--format", rc.format, "output format: json, csv, or both")
      ->check(CLI::IsMember({"json", "csv", "both"}));

  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", rc.data, "panel CSV path");
    sub->add_option("--unit-col", rc.unit_col, "unit id column");
    sub->add_option("--time-col", rc.time_col, "time column");
    sub->add_option("--outcome-col", rc.outcome_col, "outcome column");
    sub->add_option("--first-treat-col", rc.first_treat_col,
                    "first-treatment column (0/empty = never treated)");
    sub->add_option("--treat-col", rc.treat_col,
                    "per-period 0/1 treatment column (alternative to --first-treat-col)");
    sub->add_option("--covariates", rc.covariates,
                    "covariate columns (default: all remaining columns)");
  };
  auto add_learners = [&](CLI::App* sub) {
    sub->add_option("--outcome-learner", rc.outcome_learner, "ols or ridge");
    sub->add_option("--ridge-lambda", rc.ridge_lambda, "ridge penalty");
    sub->add_option("--folds", rc.folds, "cross-fitting folds");
    sub->add_flag("--calibrate-propensity", rc.calibrate_propensity,
                  "isotonic calibration of propensity scores");
  };
  auto add_design = [&](CLI::App* sub) {
    sub->add_option("--control", rc.control, "control group: never or notyet");
    sub->add_option("--delta", rc.delta, "anticipation periods");
  };
  auto add_cell = [&](CLI::App* sub) {
    sub->add_option("--g", rc.g, "treatment cohort of the cell");
    sub->add_option("--t-eval", rc.t_eval, "evaluation period of the cell");
    sub->add_option("--t-pre", rc.t_pre, "base period (default: standard base-period rule)");
    sub->add_flag("--unnormalized", rc.unnormalized, "skip Hajek normalization of the weights");
  };

  CLI::App* est = app.add_subcommand("estimate", "estimate ATT(g,t) for every feasible cell");
  add_data(est);
  add_learners(est);
  add_design(est);
  est->add_option("--level", rc.level, "two-sided confidence level");

  CLI::App* sen = app.add_subcommand("sensitivity",
                                     "bias-adjusted bounds and robustness values for one cell");
  add_data(sen);
  add_learners(sen);
  add_design(sen);
  add_cell(sen);
  sen->add_option("--level", rc.level, "one-sided confidence level");
  sen->add_option("--cf-y", rc.cf_y, "scenario outcome confounding strength, [0,1)");
  sen->add_option("--cf-d", rc.cf_d, "scenario treatment confounding strength, [0,1)");
  sen->add_option("--rho", rc.rho, "scenario channel correlation, [-1,1]");
  sen->add_option("--h0", rc.h0, "null value for robustness values");
  sen->add_option("--label", rc.label, "scenario label");
  sen->add_option("--scenario-from", rc.scenario_from,
                  "derive the scenario: pretest or benchmark");
  sen->add_option("--leave-out", rc.leave_out, "covariates to omit for benchmarking");
  sen->add_option("--pretest-k", rc.pretest_k, "multiplier on the max pre-treatment RV");

  CLI::App* ben = app.add_subcommand("benchmark",
                                     "scenario from re-estimation without named covariates");
  add_data(ben);
  add_learners(ben);
  add_design(ben);
  add_cell(ben);
  ben->add_option("--leave-out", rc.leave_out, "covariates to omit");

  CLI::App* pre = app.add_subcommand("pretest", "scenario from placebo pre-treatment cells");
  add_data(pre);
  add_learners(pre);
  add_design(pre);
  pre->add_option("--level", rc.level, "confidence level for the cell table");
  pre->add_option("--pretest-k", rc.pretest_k, "multiplier on the max pre-treatment RV");
  pre->add_option("--rho", rc.rho, "scenario channel correlation");

  CLI::App* con = app.add_subcommand("contour", "bound surface over a scenario grid");
  add_data(con);
  add_learners(con);
  add_design(con);
  add_cell(con);
  con->add_option("--cf-y-max", rc.cf_y_max, "cf_y axis maximum");
  con->add_option("--cf-d-max", rc.cf_d_max, "cf_d axis maximum");
  con->add_option("--grid", rc.grid, "grid points per axis");
  con->add_option("--side", rc.side, "lower or upper bound");
  con->add_option("--level", rc.contour_level,
                  "confidence level; omit for point bounds");
  con->add_option("--rho", rc.rho, "scenario channel correlation");
  con->add_flag("--svg", rc.svg, "also render an SVG contour plot");

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo study of the confounded DGP");
  sim->add_option("--n", rc.sizes, "sample sizes (repeatable)");
  sim->add_option("--reps", rc.reps, "replications per sample size");
  sim->add_option("--level", rc.level, "one-sided confidence level");
  sim->add_option("--target", rc.target, "calibration target for cf_y = cf_d");
  sim->add_option("--gamma-a", rc.gamma_a, "confounder propensity loading (skips calibration)");
  sim->add_option("--beta-a", rc.beta_a, "confounder outcome loading (skips calibration)");
  sim->add_option("--superpop-n", rc.superpop_n, "super-population size for oracle values");
  sim->add_option("--tol", rc.tol, "calibration tolerance");
  sim->add_option("--sigma-eps", rc.sigma_eps, "outcome noise sd");
  sim->add_option("--theta", rc.theta, "true ATT");
  sim->add_flag("--raw-features", rc.raw_features, "use raw normals instead of transforms");
  sim->add_flag("--divide-by-variance", rc.divide_by_variance,
                "standardize features by variance instead of sd");
  sim->add_flag("--normalized", rc.normalized, "Hajek-normalized estimates in the farm");

  CLI::App* cal = app.add_subcommand("calibrate", "solve confounder loadings for a target");
  cal->add_option("--target", rc.target, "target cf_y = cf_d");
  cal->add_option("--superpop-n", rc.superpop_n, "super-population size");
  cal->add_option("--tol", rc.tol, "tolerance");
  cal->add_option("--sigma-eps", rc.sigma_eps, "outcome noise sd");
  cal->add_option("--theta", rc.theta, "true ATT");
  cal->add_flag("--raw-features", rc.raw_features, "use raw normals instead of transforms");
  cal->add_flag("--divide-by-variance", rc.divide_by_variance,
                "standardize features by variance instead of sd");

  try {
    app.parse(argc, argv);
    int threads = resolve_threads(rc.threads);
    if (est->parsed()) return cmd_estimate(rc, threads);
    if (sen->parsed()) return cmd_sensitivity(rc, threads);
    if (ben->parsed()) return cmd_benchmark(rc, threads);
    if (pre->parsed()) return cmd_pretest(rc, threads);
    if (con->parsed()) return cmd_contour(rc, threads);
    if (sim->parsed()) return cmd_simulate(rc, threads);
    if (cal->parsed()) return cmd_calibrate(rc, threads);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    emit_error("InvalidArgument", e.what(), 2);
    return 2;
  } catch (const ts::Error& e) {
    int code = e.input_error ? 2 : 3;
    emit_error(e.kind, e.what(), code);
    return code;
  } catch (const std::exception& e) {
    emit_error("Internal", e.what(), 3);
    return 3;
  }
}
