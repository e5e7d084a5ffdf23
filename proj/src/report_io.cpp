#include "trendsense/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "trendsense/errors.hpp"
#include "trendsense/stats.hpp"

namespace trendsense {

namespace {

json stat_json(const SummaryStat& s) { return json{{"mean", s.mean}, {"sd", s.sd}}; }

json series_json(const Series& s) {
  json x = json::array(), y = json::array();
  for (long i = 0; i < s.x.size(); ++i) {
    x.push_back(s.x[i]);
    y.push_back(s.y[i]);
  }
  return json{{"x", x}, {"y", y}};
}

}  // namespace

std::string format_double(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

json to_json(const LearnerSpec& spec) {
  return json{{"outcome", spec.outcome == LearnerSpec::Outcome::kRidge ? "ridge" : "ols"},
              {"propensity", "logit"},
              {"ridge_lambda", spec.ridge_lambda},
              {"folds", spec.folds},
              {"calibrate", spec.calibrate},
              {"seed", spec.seed}};
}

LearnerSpec learner_spec_from_json(const json& j) {
  LearnerSpec spec;
  if (j.contains("outcome")) {
    std::string o = j.at("outcome").get<std::string>();
    if (o == "ols")
      spec.outcome = LearnerSpec::Outcome::kOls;
    else if (o == "ridge")
      spec.outcome = LearnerSpec::Outcome::kRidge;
    else
      throw InvalidArgument("learner spec: unknown outcome learner '" + o + "'");
  }
  if (j.contains("propensity") && j.at("propensity").get<std::string>() != "logit")
    throw InvalidArgument("learner spec: only 'logit' propensity is available");
  if (j.contains("ridge_lambda")) spec.ridge_lambda = j.at("ridge_lambda").get<double>();
  if (j.contains("folds")) spec.folds = j.at("folds").get<int>();
  if (j.contains("calibrate")) spec.calibrate = j.at("calibrate").get<bool>();
  if (j.contains("seed")) spec.seed = j.at("seed").get<uint64_t>();
  return spec;
}

json to_json(const Scenario& sc) {
  return json{{"cf_y", sc.cf_y}, {"cf_d", sc.cf_d}, {"rho", sc.rho}, {"label", sc.label}};
}

json to_json(const AttEstimate& est, bool include_vectors) {
  json j{{"theta", est.theta_hat},
         {"se", est.se},
         {"n", est.n},
         {"normalized", est.normalized}};
  if (est.meta) {
    j["g"] = est.meta->g;
    j["t_pre"] = est.meta->t_pre;
    j["t_eval"] = est.meta->t_eval;
    j["control"] = est.meta->control_kind;
  }
  if (include_vectors) {
    json psi = json::array(), riesz = json::array();
    for (long i = 0; i < est.psi.size(); ++i) {
      psi.push_back(est.psi[i]);
      riesz.push_back(est.riesz[i]);
    }
    j["psi"] = psi;
    j["riesz"] = riesz;
  }
  return j;
}

json to_json(const SensitivityReport& rep) {
  return json{{"theta", rep.theta},
              {"se", rep.se},
              {"theta_minus", rep.theta_minus},
              {"theta_plus", rep.theta_plus},
              {"ell_minus", rep.ell_minus},
              {"u_plus", rep.u_plus},
              {"rv", rep.rv},
              {"rv_a", rep.rv_a},
              {"scenario", to_json(rep.scenario)},
              {"h0", rep.h0},
              {"level", rep.level},
              {"se_minus", rep.se_minus},
              {"se_plus", rep.se_plus}};
}

json to_json(const DgpConfig& cfg) {
  return json{{"theta", cfg.theta},
              {"gamma_a", cfg.gamma_a},
              {"beta_a", cfg.beta_a},
              {"sigma_eps", cfg.sigma_eps},
              {"n", cfg.n},
              {"seed", cfg.seed},
              {"use_z_transform", cfg.use_z_transform},
              {"divide_by_variance", cfg.divide_by_variance},
              {"clip_lo", cfg.clip_lo},
              {"clip_hi", cfg.clip_hi}};
}

json to_json(const OracleScenario& oracle) {
  return json{{"cf_y", oracle.cf_y},
              {"cf_d", oracle.cf_d},
              {"rho", oracle.rho},
              {"s", oracle.s},
              {"theta_short", oracle.theta_short},
              {"theta_long", oracle.theta_long}};
}

json to_json(const Diagnostics& diag) {
  json cohorts = json::array();
  for (const auto& [g, count] : diag.cohort_sizes)
    cohorts.push_back(json{{"g", is_never(g) ? json(nullptr) : json(g)}, {"units", count}});
  json shares = json::array();
  for (double s : diag.treated_share_by_period) shares.push_back(s);
  json covs = json::array();
  for (const auto& c : diag.covariate_summaries)
    covs.push_back(json{{"name", c.name}, {"mean", c.mean}, {"sd", c.sd},
                        {"min", c.min}, {"max", c.max}});
  return json{{"n_units", diag.n_units},
              {"n_periods", diag.n_periods},
              {"cohorts", cohorts},
              {"treated_share_by_period", shares},
              {"covariates", covs}};
}

json gt_batch_json(const GtBatch& batch, double level) {
  json cells = json::array();
  for (const auto& r : batch.results) {
    Interval ci = confidence_interval(r.estimate, level, Sides::kTwo);
    json c = to_json(r.estimate);
    c["ci_low"] = ci.lo;
    c["ci_high"] = ci.hi;
    c["n_treated"] = r.n_treated;
    c["n_control"] = r.n_control;
    c["fragile"] = r.fragile;
    cells.push_back(c);
  }
  json skipped = json::array();
  for (const auto& s : batch.skipped)
    skipped.push_back(json{{"g", s.g}, {"t_eval", s.t_eval}, {"reason", s.reason}});
  return json{{"level", level}, {"cells", cells}, {"skipped", skipped}};
}

std::string gt_batch_csv(const GtBatch& batch, double level) {
  std::ostringstream out;
  out << "g,t_pre,t_eval,theta,se,ci_low,ci_high,n_treated,n_control\n";
  for (const auto& r : batch.results) {
    Interval ci = confidence_interval(r.estimate, level, Sides::kTwo);
    out << r.spec.g << ',' << r.spec.t_pre << ',' << r.spec.t_eval << ','
        << format_double(r.estimate.theta_hat) << ',' << format_double(r.estimate.se) << ','
        << format_double(ci.lo) << ',' << format_double(ci.hi) << ',' << r.n_treated << ','
        << r.n_control << '\n';
  }
  return out.str();
}

std::string contour_csv(const ContourGrid& grid) {
  std::ostringstream out;
  out << "cf_y/cf_d";
  for (long j = 0; j < grid.cf_d_values.size(); ++j)
    out << ',' << format_double(grid.cf_d_values[j]);
  out << '\n';
  for (long i = 0; i < grid.cf_y_values.size(); ++i) {
    out << format_double(grid.cf_y_values[i]);
    for (long j = 0; j < grid.cf_d_values.size(); ++j)
      out << ',' << format_double(grid.values(i, j));
    out << '\n';
  }
  return out.str();
}

json contour_json(const ContourGrid& grid) {
  json rows = json::array();
  for (long i = 0; i < grid.values.rows(); ++i) {
    json row = json::array();
    for (long j = 0; j < grid.values.cols(); ++j) row.push_back(grid.values(i, j));
    rows.push_back(row);
  }
  json cf_y = json::array(), cf_d = json::array();
  for (long i = 0; i < grid.cf_y_values.size(); ++i) cf_y.push_back(grid.cf_y_values[i]);
  for (long j = 0; j < grid.cf_d_values.size(); ++j) cf_d.push_back(grid.cf_d_values[j]);
  json j{{"side", grid.side == BoundSide::kLower ? "lower" : "upper"},
         {"rho", grid.rho},
         {"theta", grid.theta_hat},
         {"cf_y", cf_y},
         {"cf_d", cf_d},
         {"values", rows}};
  j["level"] = grid.level ? json(*grid.level) : json(nullptr);
  return j;
}

/* Marching squares over the grid: for each contour level, walk every cell and
 * emit the line segment(s) where the level crosses the cell edges. */
std::string contour_svg(const ContourGrid& grid, int n_levels) {
  const int w = 640, h = 480, pad = 50;
  const long nr = grid.values.rows(), nc = grid.values.cols();
  double vmin = grid.values.minCoeff(), vmax = grid.values.maxCoeff();
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  svg << "<rect width='" << w << "' height='" << h << "' fill='white'/>\n";
  auto px = [&](double jcol) { return pad + (w - 2 * pad) * jcol / (nc - 1); };
  auto py = [&](double irow) { return h - pad - (h - 2 * pad) * irow / (nr - 1); };

  svg << "<line x1='" << px(0) << "' y1='" << py(0) << "' x2='" << px(nc - 1) << "' y2='"
      << py(0) << "' stroke='black'/>\n";
  svg << "<line x1='" << px(0) << "' y1='" << py(0) << "' x2='" << px(0) << "' y2='"
      << py(nr - 1) << "' stroke='black'/>\n";
  svg << "<text x='" << w / 2 << "' y='" << h - 12 << "' font-size='12'>cf_d</text>\n";
  svg << "<text x='12' y='" << h / 2 << "' font-size='12'>cf_y</text>\n";

  if (vmax > vmin) {
    for (int l = 1; l <= n_levels; ++l) {
      double level = vmin + (vmax - vmin) * l / (n_levels + 1);
      std::ostringstream path;
      for (long i = 0; i + 1 < nr; ++i) {
        for (long j = 0; j + 1 < nc; ++j) {
          // corner values; edge order: bottom, right, top, left
          double c00 = grid.values(i, j), c01 = grid.values(i, j + 1);
          double c10 = grid.values(i + 1, j), c11 = grid.values(i + 1, j + 1);
          struct Pt {
            double x, y;
          };
          std::vector<Pt> pts;
          auto edge = [&](double va, double vb, double xa, double ya, double xb, double yb) {
            if ((va < level) == (vb < level)) return;
            double t = (level - va) / (vb - va);
            pts.push_back({xa + t * (xb - xa), ya + t * (yb - ya)});
          };
          edge(c00, c01, px(j), py(i), px(j + 1), py(i));
          edge(c01, c11, px(j + 1), py(i), px(j + 1), py(i + 1));
          edge(c10, c11, px(j), py(i + 1), px(j + 1), py(i + 1));
          edge(c00, c10, px(j), py(i), px(j), py(i + 1));
          if (pts.size() >= 2)
            path << "M" << pts[0].x << ' ' << pts[0].y << " L" << pts[1].x << ' ' << pts[1].y
                 << ' ';
        }
      }
      std::string d = path.str();
      if (!d.empty())
        svg << "<path d='" << d << "' stroke='steelblue' fill='none' stroke-width='1'/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string series_csv(const Series& s, const std::string& xname, const std::string& yname) {
  std::ostringstream out;
  out << xname << ',' << yname << '\n';
  for (long i = 0; i < s.x.size(); ++i)
    out << format_double(s.x[i]) << ',' << format_double(s.y[i]) << '\n';
  return out.str();
}

json sim_tables_json(const SimTables& t) {
  json point = json::object(), limit = json::object(), cover = json::object();
  for (const auto& [name, s] : t.point_stats) point[name] = stat_json(s);
  for (const auto& [name, s] : t.limit_stats) limit[name] = stat_json(s);
  for (const auto& [name, v] : t.coverage) cover[name] = v;
  return json{{"config", to_json(t.config)},
              {"oracle", to_json(t.oracle)},
              {"level", t.level},
              {"seed", t.seed},
              {"normalized", t.normalized},
              {"reps_requested", t.reps_requested},
              {"reps_done", t.reps_done},
              {"failures", t.failures},
              {"point_estimates", point},
              {"confidence_limits", limit},
              {"coverage", cover},
              {"hist_theta_minus", series_json(t.hist_theta_minus)},
              {"hist_ell_minus", series_json(t.hist_ell_minus)},
              {"density_theta_s", series_json(t.dens_theta_s)},
              {"density_theta_minus", series_json(t.dens_theta_minus)},
              {"density_rv", series_json(t.dens_rv)}};
}

namespace {

const SummaryStat* find_stat(const std::vector<std::pair<std::string, SummaryStat>>& v,
                             const std::string& name) {
  for (const auto& [k, s] : v)
    if (k == name) return &s;
  return nullptr;
}

}  // namespace

std::string sim_point_csv(const std::vector<SimTables>& runs) {
  static const char* cols[] = {"theta_s", "theta_minus", "theta_plus",
                               "theta_long", "rv", "rv_rho1"};
  std::ostringstream out;
  out << "n,reps,failures";
  for (const char* c : cols) out << ',' << c << "_mean," << c << "_sd";
  out << '\n';
  for (const auto& t : runs) {
    out << t.config.n << ',' << t.reps_done << ',' << t.failures;
    for (const char* c : cols) {
      const SummaryStat* s = find_stat(t.point_stats, c);
      out << ',' << format_double(s->mean) << ',' << format_double(s->sd);
    }
    out << '\n';
  }
  return out.str();
}

std::string sim_limit_csv(const std::vector<SimTables>& runs) {
  static const char* cols[] = {"ell_s", "ell_minus", "ell_long", "u_plus", "rv_a"};
  std::ostringstream out;
  out << "n,reps,failures";
  for (const char* c : cols) out << ',' << c << "_mean," << c << "_sd";
  out << ",cover_s,cover_minus,cover_long\n";
  for (const auto& t : runs) {
    out << t.config.n << ',' << t.reps_done << ',' << t.failures;
    for (const char* c : cols) {
      const SummaryStat* s = find_stat(t.limit_stats, c);
      out << ',' << format_double(s->mean) << ',' << format_double(s->sd);
    }
    for (const auto& [name, v] : t.coverage) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

std::string run_id(const json& config) {
  std::string s = config.dump();
  uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : s) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write file: " + path);
  out << content;
}

}  // namespace trendsense
