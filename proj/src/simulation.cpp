#include "trendsense/simulation.hpp"

#include <cmath>
#include <limits>

#include "trendsense/errors.hpp"
#include "trendsense/learners.hpp"
#include "trendsense/rng.hpp"

namespace trendsense {

namespace {

struct BaseDraw {
  Eigen::MatrixXd z;  // features after (optional) transform + standardization
  Eigen::VectorXd a, u, e0, e1;
  Eigen::VectorXd f_reg, f_ps;
  std::vector<std::string> names;
};

BaseDraw draw_base(const DgpConfig& cfg) {
  const int n = cfg.n;
  Rng rng(cfg.seed);
  Eigen::MatrixXd x(n, 5);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 5; ++k) x(i, k) = rng.normal();

  BaseDraw b;
  if (cfg.use_z_transform) {
    Eigen::MatrixXd zt(n, 5);
    for (int i = 0; i < n; ++i) {
      zt(i, 0) = std::exp(0.5 * x(i, 0));
      zt(i, 1) = 10.0 + x(i, 1) / (1.0 + std::exp(x(i, 0)));
      double c = 0.6 + x(i, 0) * x(i, 2) / 25.0;
      zt(i, 2) = c * c * c;
      double q = 20.0 + x(i, 1) + x(i, 3);
      zt(i, 3) = q * q;
      zt(i, 4) = x(i, 4);
    }
    b.z.resize(n, 5);
    for (int k = 0; k < 5; ++k) {
      double m = zt.col(k).mean();
      double v = (zt.col(k).array() - m).square().mean();
      double divisor = cfg.divide_by_variance ? v : std::sqrt(v);
      b.z.col(k) = (zt.col(k).array() - m) / divisor;
    }
    b.names = {"z1", "z2", "z3", "z4", "z5"};
  } else {
    b.z = x;
    b.names = {"x1", "x2", "x3", "x4", "x5"};
  }

  b.a.resize(n);
  for (int i = 0; i < n; ++i) b.a[i] = rng.uniform(-1.0, 1.0);
  b.u.resize(n);
  for (int i = 0; i < n; ++i) b.u[i] = rng.uniform();
  b.e0.resize(n);
  for (int i = 0; i < n; ++i) b.e0[i] = rng.normal();
  b.e1.resize(n);
  for (int i = 0; i < n; ++i) b.e1[i] = rng.normal();

  b.f_reg = (210.0 + 27.4 * b.z.col(0).array() +
             13.7 * (b.z.col(1).array() + b.z.col(2).array() + b.z.col(3).array()))
                .matrix();
  b.f_ps = (0.75 * (-b.z.col(0).array() + 0.5 * b.z.col(1).array() -
                    0.25 * b.z.col(2).array() - 0.1 * b.z.col(3).array()))
               .matrix();
  return b;
}

Eigen::VectorXd gen_treatment(const BaseDraw& b, const DgpConfig& cfg) {
  const long n = b.u.size();
  Eigen::VectorXd d(n);
  for (long i = 0; i < n; ++i) {
    double p = 1.0 / (1.0 + std::exp(-b.f_ps[i])) + cfg.gamma_a * b.a[i];
    p = std::min(cfg.clip_hi, std::max(cfg.clip_lo, p));
    d[i] = p >= b.u[i] ? 1.0 : 0.0;
  }
  return d;
}

// returns (Y[1], Y[2])
std::pair<Eigen::VectorXd, Eigen::VectorXd> gen_outcomes(const BaseDraw& b, const DgpConfig& cfg,
                                                         const Eigen::VectorXd& d) {
  Eigen::VectorXd y1 = b.f_reg + cfg.sigma_eps * b.e0;
  Eigen::VectorXd y2 =
      (d.array() * cfg.theta * (b.z.col(4).array() + 1.0) + b.f_reg.array() +
       cfg.beta_a * b.a.array() + cfg.sigma_eps * b.e1.array())
          .matrix();
  return {y1, y2};
}

Eigen::VectorXd clip_probs(const Eigen::VectorXd& p) {
  return p.array().min(1.0 - kPropensityClip).max(kPropensityClip).matrix();
}

std::vector<int> which(const Eigen::VectorXd& d, bool treated) {
  std::vector<int> idx;
  for (long i = 0; i < d.size(); ++i)
    if ((d[i] > 0.5) == treated) idx.push_back(static_cast<int>(i));
  return idx;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(idx.size(), m.cols());
  for (size_t r = 0; r < idx.size(); ++r) out.row(r) = m.row(idx[r]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (size_t r = 0; r < idx.size(); ++r) out[r] = v[idx[r]];
  return out;
}

// in-sample propensity material for one gamma (independent of beta)
struct PropEval {
  Eigen::VectorXd d;
  double p_hat = 0.0;
  Eigen::VectorXd m_short, m_long;     // clipped in-sample fits
  Eigen::VectorXd alpha_short, alpha_long;
  double cf_d = 0.0;
};

PropEval eval_propensity(const BaseDraw& b, const DgpConfig& cfg, const Eigen::MatrixXd& xlong) {
  PropEval pe;
  pe.d = gen_treatment(b, cfg);
  double ds = pe.d.sum();
  if (ds < 2 || ds > pe.d.size() - 2)
    throw CalibrationDiverged("calibration: treatment group degenerate");
  pe.p_hat = pe.d.mean();
  pe.m_short = clip_probs(fit_logistic(b.z, pe.d).predict(b.z));
  pe.m_long = clip_probs(fit_logistic(xlong, pe.d).predict(xlong));
  auto alpha = [&](const Eigen::VectorXd& m) {
    return (pe.d.array() / pe.p_hat -
            (1.0 - pe.d.array()) * m.array() / (pe.p_hat * (1.0 - m.array())))
        .matrix();
  };
  pe.alpha_short = alpha(pe.m_short);
  pe.alpha_long = alpha(pe.m_long);
  double odds_s = (pe.m_short.array() / (1.0 - pe.m_short.array())).mean();
  double odds_l = (pe.m_long.array() / (1.0 - pe.m_long.array())).mean();
  pe.cf_d = (odds_l - odds_s) / odds_l;
  return pe;
}

struct OutcomeEval {
  double cf_y = 0.0, rho = 0.0;
  double theta_short = 0.0, theta_long = 0.0;
  double sigma2_short = 0.0, nu2_short = 0.0;
};

OutcomeEval eval_outcomes(const BaseDraw& b, const DgpConfig& cfg, const Eigen::MatrixXd& xlong,
                          const PropEval& pe) {
  auto [y1, y2] = gen_outcomes(b, cfg, pe.d);
  Eigen::VectorXd dy = y2 - y1;
  std::vector<int> ctl = which(pe.d, false), trt = which(pe.d, true);

  auto fit_pred = [&](const Eigen::MatrixXd& x, const std::vector<int>& rows) {
    LinearModel lm = fit_ols(take_rows(x, rows), take(dy, rows));
    return lm.predict(x);
  };
  Eigen::VectorXd g0s = fit_pred(b.z, ctl), g1s = fit_pred(b.z, trt);
  Eigen::VectorXd g0l = fit_pred(xlong, ctl), g1l = fit_pred(xlong, trt);

  Eigen::ArrayXd d = pe.d.array();
  Eigen::ArrayXd ghat_s = d * g1s.array() + (1.0 - d) * g0s.array();
  Eigen::ArrayXd ghat_l = d * g1l.array() + (1.0 - d) * g0l.array();

  OutcomeEval oe;
  oe.sigma2_short = (dy.array() - ghat_s).square().mean();
  oe.cf_y = (ghat_l - ghat_s).square().mean() / oe.sigma2_short;
  oe.theta_short = (pe.alpha_short.array() * (dy.array() - g0s.array())).mean();
  oe.theta_long = (pe.alpha_long.array() * (dy.array() - g0l.array())).mean();
  oe.nu2_short = pe.alpha_short.array().square().mean();
  oe.rho = correlation((ghat_l - ghat_s).matrix(),
                       (pe.alpha_long - pe.alpha_short).matrix());
  return oe;
}

}  // namespace

void DgpConfig::validate() const {
  if (!(sigma_eps > 0)) throw InvalidArgument("DgpConfig: sigma_eps must be positive");
  if (!(clip_lo > 0 && clip_lo < clip_hi && clip_hi < 1))
    throw InvalidArgument("DgpConfig: clip interval must satisfy 0 < lo < hi < 1");
  if (!std::isfinite(theta)) throw InvalidArgument("DgpConfig: theta must be finite");
  if (n < 2) throw InvalidArgument("DgpConfig: n must be at least 2");
}

PanelDataset draw_sample(const DgpConfig& cfg) {
  cfg.validate();
  BaseDraw b = draw_base(cfg);
  Eigen::VectorXd d = gen_treatment(b, cfg);
  auto [y1, y2] = gen_outcomes(b, cfg, d);

  PanelDataset ds;
  ds.periods = {1, 2};
  ds.unit_ids.resize(cfg.n);
  for (int i = 0; i < cfg.n; ++i) ds.unit_ids[i] = "u" + std::to_string(i + 1);
  ds.outcomes.resize(cfg.n, 2);
  ds.outcomes.col(0) = y1;
  ds.outcomes.col(1) = y2;
  ds.covariates = b.z;
  ds.covariate_names = b.names;
  ds.first_treatment.resize(cfg.n);
  for (int i = 0; i < cfg.n; ++i) ds.first_treatment[i] = d[i] > 0.5 ? 2 : kNever;
  ds.hidden_confounder = b.a;
  return ds;
}

TwoByTwoView long_view(const PanelDataset& ds) {
  if (!ds.hidden_confounder)
    throw InvalidArgument("long_view: dataset has no hidden confounder");
  TwoByTwoView v = canonical_2x2(ds);
  Eigen::MatrixXd x(v.xmat.rows(), v.xmat.cols() + 1);
  x.leftCols(v.xmat.cols()) = v.xmat;
  x.col(v.xmat.cols()) = *ds.hidden_confounder;
  v.xmat = std::move(x);
  v.covariate_names.push_back("a");
  return v;
}

CalibrationResult calibrate_confounding(double target_cf, int superpop_n, double tol,
                                        uint64_t seed, DgpConfig base) {
  if (!(target_cf > 0.0 && target_cf < 1.0))
    throw InvalidArgument("calibrate_confounding: target_cf outside (0,1)");
  if (superpop_n < 1000)
    throw InvalidArgument("calibrate_confounding: superpop_n too small to calibrate");
  base.n = superpop_n;
  base.seed = seed;
  base.validate();

  BaseDraw b = draw_base(base);
  Eigen::MatrixXd xlong(superpop_n, 6);
  xlong.leftCols(5) = b.z;
  xlong.col(5) = b.a;

  DgpConfig cfg = base;
  PropEval pe;

  auto cf_d_at = [&](double gamma) {
    cfg.gamma_a = gamma;
    pe = eval_propensity(b, cfg, xlong);
    return pe.cf_d;
  };
  auto cf_y_at = [&](double beta) {
    cfg.beta_a = beta;
    return eval_outcomes(b, cfg, xlong, pe).cf_y;
  };

  // expanding bracket then bisection; the map gamma -> cf_d is increasing
  auto solve = [&](auto eval, double hi0, const char* what) {
    double lo = 0.0, hi = hi0;
    int expand = 0;
    while (eval(hi) < target_cf) {
      lo = hi;
      hi *= 2.0;
      if (++expand > 12)
        throw CalibrationDiverged(std::string("calibration: cannot reach target for ") + what);
    }
    double mid = hi;
    for (int it = 0; it < 40; ++it) {
      mid = 0.5 * (lo + hi);
      double v = eval(mid);
      if (std::fabs(v - target_cf) < 0.25 * tol) break;
      if (v < target_cf)
        lo = mid;
      else
        hi = mid;
    }
    return mid;
  };

  for (int round = 0; round < 60; ++round) {
    cfg.gamma_a = solve(cf_d_at, 0.4, "gamma_a");
    cfg.beta_a = solve(cf_y_at, 1.0, "beta_a");
    // re-evaluate both at the joint solution
    double cf_d = cf_d_at(cfg.gamma_a);
    OutcomeEval oe = eval_outcomes(b, cfg, xlong, pe);
    if (std::fabs(cf_d - target_cf) <= tol && std::fabs(oe.cf_y - target_cf) <= tol) {
      CalibrationResult res;
      res.gamma_a = cfg.gamma_a;
      res.beta_a = cfg.beta_a;
      res.oracle.cf_y = oe.cf_y;
      res.oracle.cf_d = cf_d;
      res.oracle.rho = oe.rho;
      res.oracle.s = std::sqrt(oe.sigma2_short * oe.nu2_short);
      res.oracle.theta_short = oe.theta_short;
      res.oracle.theta_long = oe.theta_long;
      return res;
    }
  }
  throw CalibrationDiverged("calibrate_confounding: no convergence after 60 rounds");
}

OracleScenario evaluate_oracle(const DgpConfig& base, int superpop_n, uint64_t seed) {
  if (superpop_n < 1000)
    throw InvalidArgument("evaluate_oracle: superpop_n too small");
  DgpConfig cfg = base;
  cfg.n = superpop_n;
  cfg.seed = seed;
  cfg.validate();

  BaseDraw b = draw_base(cfg);
  Eigen::MatrixXd xlong(superpop_n, 6);
  xlong.leftCols(5) = b.z;
  xlong.col(5) = b.a;

  PropEval pe = eval_propensity(b, cfg, xlong);
  OutcomeEval oe = eval_outcomes(b, cfg, xlong, pe);
  OracleScenario oracle;
  oracle.cf_y = oe.cf_y;
  oracle.cf_d = pe.cf_d;
  oracle.rho = oe.rho;
  oracle.s = std::sqrt(oe.sigma2_short * oe.nu2_short);
  oracle.theta_short = oe.theta_short;
  oracle.theta_long = oe.theta_long;
  return oracle;
}

SimTables run_monte_carlo(const DgpConfig& cfg, const OracleScenario& oracle, int reps,
                          double level, uint64_t seed, int threads, bool normalized) {
  cfg.validate();
  if (reps < 1) throw InvalidArgument("run_monte_carlo: reps must be positive");
  if (!(level > 0.0 && level < 1.0))
    throw InvalidArgument("run_monte_carlo: level outside (0,1)");

  SimTables tables;
  tables.config = cfg;
  tables.oracle = oracle;
  tables.level = level;
  tables.seed = seed;
  tables.normalized = normalized;
  tables.reps_requested = reps;
  tables.reps.resize(reps);

  Scenario sc{oracle.cf_y, oracle.cf_d, oracle.rho, "oracle"};
  sc.validate();

  parallel_for(reps, threads, [&](int r) {
    RepRecord& rec = tables.reps[r];
    try {
      DgpConfig rep_cfg = cfg;
      rep_cfg.seed = mix_seed(seed, static_cast<uint64_t>(r));
      PanelDataset ds = draw_sample(rep_cfg);
      TwoByTwoView vs = canonical_2x2(ds);
      TwoByTwoView vl = long_view(ds);

      LearnerSpec ls;
      ls.seed = mix_seed(seed, static_cast<uint64_t>(r), 1);
      NuisanceFit fs = crossfit(vs, ls);
      LearnerSpec ll = ls;
      ll.seed = mix_seed(seed, static_cast<uint64_t>(r), 2);
      NuisanceFit fl = crossfit(vl, ll);

      AttEstimate es = att_dml(vs, fs, normalized);
      AttEstimate el = att_dml(vl, fl, normalized);
      SensitivityElements sel = elements(es);
      SensitivityReport rep = adjusted_bounds(sel, sc, level, cfg.theta);

      rec.theta_s = es.theta_hat;
      rec.se_s = es.se;
      rec.theta_minus = rep.theta_minus;
      rec.theta_plus = rep.theta_plus;
      rec.se_minus = rep.se_minus;
      rec.theta_long = el.theta_hat;
      rec.se_long = el.se;
      rec.ell_s = confidence_interval(es, level, Sides::kLower).lo;
      rec.ell_minus = rep.ell_minus;
      rec.ell_long = confidence_interval(el, level, Sides::kLower).lo;
      rec.u_plus = rep.u_plus;
      rec.rv = rep.rv;
      rec.rv_rho1 = robustness_value(sel, cfg.theta, 1.0);
      rec.rv_a = rep.rv_a;
      rec.cover_s = cfg.theta >= rec.ell_s;
      rec.cover_minus = cfg.theta >= rec.ell_minus;
      rec.cover_long = cfg.theta >= rec.ell_long;
      rec.ok = true;
    } catch (const Error& e) {
      rec.ok = false;
      rec.error = e.kind + ": " + e.what();
    }
  });

  std::vector<const RepRecord*> good;
  for (const auto& r : tables.reps)
    if (r.ok) good.push_back(&r);
  tables.reps_done = static_cast<int>(good.size());
  tables.failures = reps - tables.reps_done;

  auto collect = [&](auto member) {
    Eigen::VectorXd v(good.size());
    for (size_t i = 0; i < good.size(); ++i) v[i] = good[i]->*member;
    return v;
  };
  auto stat = [&](auto member) {
    Eigen::VectorXd v = collect(member);
    return SummaryStat{mean(v), sd(v)};
  };
  auto share = [&](auto member) {
    if (good.empty()) return std::numeric_limits<double>::quiet_NaN();
    double c = 0;
    for (const auto* r : good) c += (r->*member) ? 1.0 : 0.0;
    return c / static_cast<double>(good.size());
  };

  tables.point_stats = {
      {"theta_s", stat(&RepRecord::theta_s)},
      {"theta_minus", stat(&RepRecord::theta_minus)},
      {"theta_plus", stat(&RepRecord::theta_plus)},
      {"theta_long", stat(&RepRecord::theta_long)},
      {"rv", stat(&RepRecord::rv)},
      {"rv_rho1", stat(&RepRecord::rv_rho1)},
  };
  tables.limit_stats = {
      {"ell_s", stat(&RepRecord::ell_s)},
      {"ell_minus", stat(&RepRecord::ell_minus)},
      {"ell_long", stat(&RepRecord::ell_long)},
      {"u_plus", stat(&RepRecord::u_plus)},
      {"rv_a", stat(&RepRecord::rv_a)},
  };
  tables.coverage = {
      {"cover_s", share(&RepRecord::cover_s)},
      {"cover_minus", share(&RepRecord::cover_minus)},
      {"cover_long", share(&RepRecord::cover_long)},
  };

  auto standardized = [&](Eigen::VectorXd v) {
    double m = mean(v), s = sd(v);
    if (!(s > 0)) return Eigen::VectorXd();
    return Eigen::VectorXd(((v.array() - m) / s).matrix());
  };
  if (good.size() >= 2) {
    Eigen::VectorXd tm = collect(&RepRecord::theta_minus);
    Eigen::VectorXd em = collect(&RepRecord::ell_minus);
    tables.hist_theta_minus = histogram(standardized(tm), 40, -4.0, 4.0);
    tables.hist_ell_minus = histogram(standardized(em), 40, -4.0, 4.0);
    tables.dens_theta_s = kde(collect(&RepRecord::theta_s));
    tables.dens_theta_minus = kde(tm);
    tables.dens_rv = kde(collect(&RepRecord::rv));
  }
  return tables;
}

}  // namespace trendsense
