#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "trendsense/did2x2.hpp"
#include "trendsense/didmulti.hpp"
#include "trendsense/errors.hpp"
#include "trendsense/learners.hpp"
#include "trendsense/panel.hpp"
#include "trendsense/rng.hpp"
#include "trendsense/sensitivity.hpp"
#include "trendsense/simulation.hpp"
#include "trendsense/stats.hpp"

using namespace trendsense;

namespace {

bool g_all_ok = true;
std::chrono::steady_clock::time_point g_start;

double elapsed_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - g_start).count();
}

void report(int k, const char* name, bool ok, const std::string& detail) {
  std::printf("%s criterion-%d: %s (%s) [t=%.1fs]\n", ok ? "PASS" : "FAIL", k, name,
              detail.c_str(), elapsed_s());
  std::fflush(stdout);
  if (!ok) g_all_ok = false;
}

double stat_mean(const std::vector<std::pair<std::string, SummaryStat>>& v, const char* key) {
  for (const auto& [k, s] : v)
    if (k == key) return s.mean;
  return std::numeric_limits<double>::quiet_NaN();
}

double stat_sd(const std::vector<std::pair<std::string, SummaryStat>>& v, const char* key) {
  for (const auto& [k, s] : v)
    if (k == key) return s.sd;
  return std::numeric_limits<double>::quiet_NaN();
}

bool in(double v, double lo, double hi) { return v >= lo && v <= hi; }

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

// small logistic-treatment data set for the learner checks
TwoByTwoView random_view(int n, Rng& rng) {
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd d(n), dy(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    double p = 1.0 / (1.0 + std::exp(-(0.4 * x(i, 0) - 0.3 * x(i, 1))));
    d[i] = rng.uniform() < p ? 1.0 : 0.0;
    dy[i] = 1.0 + 0.8 * x(i, 0) - 0.5 * x(i, 1) + 2.0 * d[i] + rng.normal();
  }
  return oracles::make_view(dy, d, x);
}

PanelDataset two_period_panel(uint64_t seed) {
  PanelDataset ds;
  ds.periods = {1, 2};
  Rng rng(seed);
  const int n = 80;
  ds.outcomes.resize(n, 2);
  ds.covariates.resize(n, 2);
  ds.covariate_names = {"x1", "x2"};
  for (int i = 0; i < n; ++i) {
    ds.unit_ids.push_back("u" + std::to_string(i));
    bool treated = i < 35;
    ds.first_treatment.push_back(treated ? 2 : kNever);
    double x1 = rng.normal(), x2 = rng.normal();
    ds.covariates(i, 0) = x1;
    ds.covariates(i, 1) = x2;
    double base = 2.0 * x1 - x2 + rng.normal();
    ds.outcomes(i, 0) = base + 0.4 * rng.normal();
    ds.outcomes(i, 1) = base + 0.3 + (treated ? 1.5 : 0.0) + 0.4 * rng.normal();
  }
  return ds;
}

std::vector<double> sorted_control_dy(const TwoByTwoView& v) {
  std::vector<double> out;
  for (int i = 0; i < v.n(); ++i)
    if (v.treat[i] < 0.5) out.push_back(v.delta_y[i]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int main() {
  g_start = std::chrono::steady_clock::now();
  const uint64_t kSeed = 12421;

  // ---- shared Monte Carlo setup: calibrated confounding at strength 0.1
  CalibrationResult cal = calibrate_confounding(0.1, 1000000, 0.005, kSeed);
  DgpConfig base;
  base.gamma_a = cal.gamma_a;
  base.beta_a = cal.beta_a;

  DgpConfig c1000 = base;
  c1000.n = 1000;
  SimTables t1000 = run_monte_carlo(c1000, cal.oracle, 500, 0.9, kSeed, 1);

  // ---- 1: point-estimate replication at n = 1000
  {
    double ts = stat_mean(t1000.point_stats, "theta_s");
    double tm = stat_mean(t1000.point_stats, "theta_minus");
    double rv = stat_mean(t1000.point_stats, "rv");
    bool ok = in(ts, 5.25, 5.35) && in(tm, 4.95, 5.05) && in(rv, 0.08, 0.14) &&
              t1000.failures == 0;
    report(1, "replication means at n=1000", ok,
           fmt("theta_s=%.3f theta_minus=%.3f rv=%.4f", ts, tm, rv));
  }

  // ---- 2: one-sided coverage at n = 1000
  {
    double cover_s = t1000.coverage[0].second;
    double cover_minus = t1000.coverage[1].second;
    double lm = stat_mean(t1000.limit_stats, "ell_minus");
    double ll = stat_mean(t1000.limit_stats, "ell_long");
    bool ok = in(cover_minus, 0.89, 0.96) && cover_s <= 0.75 && std::fabs(lm - ll) < 0.05;
    report(2, "coverage at n=1000", ok,
           fmt("cover_minus=%.3f cover_s=%.3f |ell_minus-ell_long|=%.4f", cover_minus, cover_s,
               std::fabs(lm - ll)));
  }

  // ---- 3: adjusted bound tracks the confounder-aware fit at n = 5000
  {
    DgpConfig c5000 = base;
    c5000.n = 5000;
    SimTables t5000 = run_monte_carlo(c5000, cal.oracle, 500, 0.9, kSeed, 1);
    double tm = stat_mean(t5000.point_stats, "theta_minus");
    double tl = stat_mean(t5000.point_stats, "theta_long");
    double ratio = stat_sd(t5000.point_stats, "theta_minus") /
                   stat_sd(t5000.point_stats, "theta_long");
    bool ok = std::fabs(tm - tl) < 0.02 && in(ratio, 0.9, 1.15);
    report(3, "oracle equivalence at n=5000", ok,
           fmt("|mean gap|=%.4f sd ratio=%.3f", std::fabs(tm - tl), ratio));
  }

  // ---- 4: representer identities and the bias decomposition on one large draw
  {
    DgpConfig big = base;
    big.n = 200000;
    big.seed = 4242;
    PanelDataset ds = draw_sample(big);
    TwoByTwoView vs = canonical_2x2(ds);
    TwoByTwoView vl = long_view(ds);
    LearnerSpec ls;
    ls.seed = 4243;
    std::vector<int> folds = make_folds(vs.treat, ls.folds, ls.seed);
    NuisanceFit fs = crossfit_with_folds(vs, ls, folds);
    NuisanceFit fl = crossfit_with_folds(vl, ls, folds);
    AttEstimate es = att_dml(vs, fs, false);
    AttEstimate el = att_dml(vl, fl, false);
    const double n = static_cast<double>(vs.n());

    Eigen::VectorXd as = es.riesz;
    double mean_alpha = as.mean();
    bool t1 = std::fabs(mean_alpha) <= 3.0 * sd(as) / std::sqrt(n);

    Eigen::ArrayXd m = fs.m_hat.array();
    Eigen::VectorXd delta =
        (as.array().square() - m / ((1.0 - m) * fs.p_hat * fs.p_hat)).matrix();
    bool t2 = std::fabs(delta.mean()) <= 3.0 * sd(delta) / std::sqrt(n);

    Eigen::ArrayXd d = vs.treat.array();
    Eigen::ArrayXd gs = d * fs.g1_hat.array() + (1.0 - d) * fs.g0_hat.array();
    Eigen::ArrayXd gl = d * fl.g1_hat.array() + (1.0 - d) * fl.g0_hat.array();
    double decomp = ((gl - gs) * (el.riesz.array() - as.array())).mean();
    double err = std::fabs((el.theta_hat - es.theta_hat) - decomp);
    bool t3 = err < 0.02;
    report(4, "representer identities at n=200000", t1 && t2 && t3,
           fmt("|mean alpha|=%.4f |moment gap|=%.4f |decomp err|=%.4f", std::fabs(mean_alpha),
               std::fabs(delta.mean()), err));
  }

  // ---- 5: robustness values close the bias gap and match bisection
  {
    double worst_gap = 0.0, worst_bis = 0.0;
    bool order_ok = true;
    for (int k = 0; k < 1000; ++k) {
      DgpConfig small;
      small.n = 300;
      small.seed = mix_seed(5000, k);
      TwoByTwoView v = canonical_2x2(draw_sample(small));
      LearnerSpec ls;
      ls.seed = mix_seed(5000, k, 1);
      AttEstimate est = att_dml(v, crossfit(v, ls), false);
      SensitivityElements el = elements(est);
      double rho = k % 3 == 0 ? 1.0 : (k % 3 == 1 ? -0.7 : 0.5);
      double h0 = k % 2 ? 0.0 : est.theta_hat - 1.0 - 0.5 * (k % 5);
      double gap = std::fabs(est.theta_hat - h0);
      double rv = robustness_value(el, h0, rho);
      auto bound = [&](double c) { return bias_bound(el, {c, c, rho, ""}).b; };
      worst_gap = std::max(worst_gap, std::fabs(bound(rv) - gap));
      double rv_bis =
          oracles::bisect([&](double c) { return bound(c) - gap; }, 0.0, 1.0 - 1e-9, 1e-12);
      worst_bis = std::max(worst_bis, std::fabs(rv - rv_bis));
      order_ok = order_ok && robustness_value_a(el, h0, rho, 0.9) <= rv + 1e-15;
    }
    bool ok = worst_gap <= 1e-8 && worst_bis <= 1e-10 && order_ok;
    report(5, "robustness-value root property over 1000 fits", ok,
           fmt("max |B(rv)-gap|=%.2e max |rv-bisect|=%.2e order=%g", worst_gap, worst_bis,
               order_ok ? 1.0 : 0.0));
  }

  // ---- 6: staggered cells reduce to the plain estimator; control-set nesting
  {
    PanelDataset ds = two_period_panel(606);
    GroupTimeSpec spec;
    spec.g = 2;
    spec.t_pre = 1;
    spec.t_eval = 2;
    LearnerSpec ls;
    ls.seed = 607;
    GtResult res = att_gt(ds, spec, ls);
    TwoByTwoView canon = canonical_2x2(ds);
    AttEstimate direct = att_dml(canon, crossfit(canon, ls), false);
    bool reduce_ok = res.estimate.theta_hat == direct.theta_hat &&
                     res.estimate.se == direct.se &&
                     (res.estimate.psi.array() == direct.psi.array()).all() &&
                     (res.estimate.riesz.array() == direct.riesz.array()).all();

    Rng rng(608);
    int panels = 0;
    bool nest_ok = true;
    while (panels < 100) {
      PanelDataset p = oracles::random_staggered_panel(rng);
      std::vector<int64_t> cohorts;
      for (int64_t g : p.first_treatment)
        if (!is_never(g) && std::find(cohorts.begin(), cohorts.end(), g) == cohorts.end())
          cohorts.push_back(g);
      if (cohorts.empty()) continue;
      ++panels;
      for (int64_t g : cohorts) {
        GroupTimeSpec s2;
        s2.g = g;
        s2.t_pre = p.periods.front();
        s2.t_eval = p.periods.back();
        s2.delta = static_cast<int64_t>(rng.below(2));
        TwoByTwoView nev, nyt;
        try {
          s2.control = ControlGroup::kNeverTreated;
          nev = gt_subsample(p, s2);
          s2.control = ControlGroup::kNotYetTreated;
          nyt = gt_subsample(p, s2);
        } catch (const Error&) {
          continue;
        }
        std::vector<double> a = sorted_control_dy(nev), b = sorted_control_dy(nyt);
        nest_ok = nest_ok && std::includes(b.begin(), b.end(), a.begin(), a.end());
      }
    }
    report(6, "structural reductions", reduce_ok && nest_ok,
           fmt("bitwise reduction=%g nesting over 100 panels=%g", reduce_ok ? 1.0 : 0.0,
               nest_ok ? 1.0 : 0.0));
  }

  // ---- 7: learners agree with slow independent oracles
  {
    Rng rng(707);
    double worst_ols = 0.0;
    for (int k = 0; k < 30; ++k) {
      Eigen::MatrixXd x(40, 3);
      Eigen::VectorXd y(40);
      for (int i = 0; i < 40; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
        y[i] = rng.normal();
      }
      double lambda = k % 3 == 0 ? 0.0 : (k % 3 == 1 ? 0.5 : 13.0);
      LinearModel lm = fit_ols(x, y, lambda);
      Eigen::VectorXd oracle = oracles::ols(x, y, lambda);
      worst_ols = std::max(worst_ols, std::fabs(lm.intercept - oracle[0]));
      for (int j = 0; j < 3; ++j)
        worst_ols = std::max(worst_ols, std::fabs(lm.coefficients[j] - oracle[j + 1]));
    }
    bool ols_ok = worst_ols <= 1e-8;

    double worst_ll = 0.0;
    bool irls_ok = true;
    for (int k = 0; k < 20; ++k) {
      TwoByTwoView v = random_view(60, rng);
      LogitModel lm = fit_logistic(v.xmat, v.treat);
      irls_ok = irls_ok && lm.converged;
      Eigen::MatrixXd xa(60, 3);
      xa.col(0).setOnes();
      xa.rightCols(2) = v.xmat;
      Eigen::VectorXd beta(3);
      beta << lm.intercept, lm.coefficients[0], lm.coefficients[1];
      Eigen::VectorXd bgd = oracles::logistic_gd(xa, v.treat);
      worst_ll = std::max(worst_ll, std::fabs(oracles::logistic_objective(xa, v.treat, beta) -
                                              oracles::logistic_objective(xa, v.treat, bgd)));
    }
    irls_ok = irls_ok && worst_ll <= 1e-6;

    double worst_pav = 0.0;
    for (int k = 0; k < 200; ++k) {
      int n = 2 + static_cast<int>(rng.below(9));  // 2..10
      Eigen::VectorXd scores(n), labels(n);
      for (int i = 0; i < n; ++i) {
        scores[i] = 0.5 * static_cast<double>(rng.below(5));  // tie-prone
        labels[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
      }
      Eigen::VectorXd fit = isotonic_calibrate(scores, labels).apply(scores);
      Eigen::VectorXd oracle = oracles::isotonic_bruteforce(scores, labels);
      worst_pav = std::max(worst_pav, (fit - oracle).cwiseAbs().maxCoeff());
    }
    bool pav_ok = worst_pav <= 1e-10;

    // held-out predictions must not depend on held-out labels
    TwoByTwoView v = random_view(120, rng);
    LearnerSpec spec;
    spec.seed = 3;
    std::vector<int> folds = make_folds(v.treat, spec.folds, spec.seed);
    NuisanceFit basefit = crossfit_with_folds(v, spec, folds);
    std::vector<int> f0;
    for (int i = 0; i < v.n(); ++i)
      if (folds[i] == 0) f0.push_back(i);
    TwoByTwoView perm = v;
    for (size_t r = 0; r < f0.size(); ++r) {
      int src = f0[(r + 1) % f0.size()];
      perm.delta_y[f0[r]] = v.delta_y[src];
      perm.treat[f0[r]] = v.treat[src];
    }
    NuisanceFit moved = crossfit_with_folds(perm, spec, folds);
    bool leak_ok = true;
    for (int i : f0)
      leak_ok = leak_ok && moved.m_hat[i] == basefit.m_hat[i] &&
                moved.g0_hat[i] == basefit.g0_hat[i] && moved.g1_hat[i] == basefit.g1_hat[i];

    report(7, "learner oracles", ols_ok && irls_ok && pav_ok && leak_ok,
           fmt("ols err=%.2e loglik err=%.2e pav err=%.2e", worst_ols, worst_ll, worst_pav));
  }

  // ---- 8: benchmark scenarios are floored, directed, and bounded
  {
    bool floors_ok = true, signal_ok = true, rho_ok = true;
    for (uint64_t s : {801ull, 802ull, 803ull}) {
      DgpConfig cfg;
      cfg.n = 40000;  // large enough that a no-power column's overfitting term sits below the floor
      cfg.seed = s;
      TwoByTwoView v = canonical_2x2(draw_sample(cfg));

      TwoByTwoView vj = v;
      vj.xmat.resize(v.xmat.rows(), 6);
      vj.xmat.leftCols(5) = v.xmat;
      Rng rng(s + 50);
      for (int i = 0; i < v.n(); ++i) vj.xmat(i, 5) = rng.normal();
      vj.covariate_names.push_back("junk");

      LearnerSpec ls;
      ls.seed = s + 100;
      Scenario noise = benchmark(vj, ls, {"junk"});
      floors_ok = floors_ok && noise.cf_y == 0.001 && noise.cf_d == 0.001;
      rho_ok = rho_ok && std::fabs(noise.rho) <= 1.0;

      Scenario z1 = benchmark(v, ls, {"z1"});
      signal_ok = signal_ok && z1.cf_d > 0.01;
      rho_ok = rho_ok && std::fabs(z1.rho) <= 1.0;
    }
    report(8, "benchmark sanity over 3 draws", floors_ok && signal_ok && rho_ok,
           fmt("floors=%g z1 signal=%g rho bounded=%g", floors_ok ? 1.0 : 0.0,
               signal_ok ? 1.0 : 0.0, rho_ok ? 1.0 : 0.0));
  }

  std::printf("%s: all criteria evaluated in %.1fs\n", g_all_ok ? "OK" : "FAILURES", elapsed_s());
  return g_all_ok ? 0 : 1;
}
