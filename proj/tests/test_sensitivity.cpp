#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "trendsense/errors.hpp"
#include "trendsense/rng.hpp"
#include "trendsense/sensitivity.hpp"
#include "trendsense/simulation.hpp"
#include "trendsense/stats.hpp"

using namespace trendsense;

namespace {

AttEstimate fit_draw(int n, uint64_t seed, double gamma_a = 0.0, double beta_a = 0.0) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.gamma_a = gamma_a;
  cfg.beta_a = beta_a;
  TwoByTwoView v = canonical_2x2(draw_sample(cfg));
  LearnerSpec ls;
  ls.seed = seed + 1;
  return att_dml(v, crossfit(v, ls), /*normalized=*/false);
}

// fully hand-specified estimate: theta is free, sigma2 = mean(dy^2), nu2 = 4
AttEstimate synthetic_estimate(double theta) {
  AttEstimate est;
  est.n = 4;
  est.theta_hat = theta;
  est.se = 0.1;
  est.delta_y = Eigen::Vector4d(1.0, 2.0, 3.0, 4.0);
  est.treat = Eigen::Vector4d(1.0, 1.0, 0.0, 0.0);
  est.psi = Eigen::Vector4d(0.1, -0.1, 0.2, -0.2);
  est.riesz = Eigen::Vector4d(2.0, 2.0, -2.0, -2.0);
  est.nuisance.g0_hat = Eigen::VectorXd::Zero(4);
  est.nuisance.g1_hat = Eigen::VectorXd::Zero(4);
  est.nuisance.m_hat = Eigen::VectorXd::Constant(4, 0.5);
  est.nuisance.p_hat = 0.5;
  return est;
}

}  // namespace

TEST_SUITE("sensitivity") {

TEST_CASE("representer second moment is exact for a flat propensity") {
  // m = p = 1/2 makes alpha = +2 for treated, -2 for controls, so nu2 = 4
  int n = 10;
  TwoByTwoView v;
  v.delta_y.resize(n);
  v.treat.resize(n);
  v.xmat = Eigen::MatrixXd::Zero(n, 1);
  v.covariate_names = {"x1"};
  for (int i = 0; i < n; ++i) {
    v.treat[i] = i < 5 ? 1.0 : 0.0;
    v.delta_y[i] = 0.5 * i;
  }
  v.n_treated = 5;
  v.n_control = 5;
  NuisanceFit fit;
  fit.g0_hat = Eigen::VectorXd::Zero(n);
  fit.g1_hat = Eigen::VectorXd::Zero(n);
  fit.m_hat = Eigen::VectorXd::Constant(n, 0.5);
  fit.p_hat = 0.5;
  AttEstimate est = att_dml(v, fit, /*normalized=*/false);
  SensitivityElements el = elements(est);
  CHECK(el.nu2 == 4.0);
  CHECK(el.psi_nu.cwiseAbs().maxCoeff() == 0.0);
  CHECK(el.n == n);
  CHECK(el.theta_hat == est.theta_hat);
}

TEST_CASE("elements require fitted treated-arm predictions") {
  AttEstimate est = synthetic_estimate(1.0);
  est.nuisance.g1_hat.resize(0);
  CHECK_THROWS_AS(elements(est), MissingG1);
}

TEST_CASE("a perfect outcome fit is flagged and blocks robustness values") {
  AttEstimate est = synthetic_estimate(2.0);
  // g(D, X) == dY exactly: zero residual variance
  est.nuisance.g1_hat = est.delta_y;
  est.nuisance.g0_hat = est.delta_y;
  SensitivityElements el = elements(est);
  CHECK(el.sigma2 == 0.0);
  CHECK(el.degenerate_sigma);
  CHECK_THROWS_AS(robustness_value(el, 0.0, 1.0), DegenerateSigma);
  SensitivityReport rep = adjusted_bounds(el, {0.1, 0.1, 1.0, ""}, 0.9);
  CHECK(std::isnan(rep.rv));
  CHECK(std::isnan(rep.rv_a));
}

TEST_CASE("the odds transform in the bound inverts cleanly") {
  SensitivityElements el = elements(synthetic_estimate(1.5));
  REQUIRE(el.sigma2 == doctest::Approx(7.5));
  REQUIRE(el.nu2 == 4.0);

  // cf_d = 1/2 means the odds factor is exactly 1
  double b_half = bias_bound(el, {0.2, 0.5, 0.8, ""}).b;
  CHECK(b_half == doctest::Approx(0.8 * std::sqrt(0.2 * el.sigma2 * el.nu2)).epsilon(1e-14));

  for (double cf_d : {0.05, 0.3, 0.7, 0.95}) {
    double b = bias_bound(el, {0.4, cf_d, -0.6, ""}).b;
    double recovered = b * b / (0.36 * 0.4 * el.sigma2 * el.nu2);
    CHECK(recovered == doctest::Approx(cf_d / (1.0 - cf_d)).epsilon(1e-12));
  }
}

TEST_CASE("a zero scenario collapses the bounds onto the point estimate") {
  AttEstimate est = fit_draw(600, 3);
  SensitivityElements el = elements(est);
  SensitivityReport rep = adjusted_bounds(el, {0.0, 0.0, 1.0, ""}, 0.9);
  CHECK(rep.theta_minus == rep.theta);
  CHECK(rep.theta_plus == rep.theta);
  CHECK(rep.se_minus == rep.se_plus);
  // with psi_b = 0 the adjusted limit is the plain one-sided bound
  Interval lower = confidence_interval(est, 0.9, Sides::kLower);
  Interval upper = confidence_interval(est, 0.9, Sides::kUpper);
  CHECK(rep.ell_minus == doctest::Approx(lower.lo).epsilon(1e-15));
  CHECK(rep.u_plus == doctest::Approx(upper.hi).epsilon(1e-15));
}

TEST_CASE("centered influence pieces really are centered") {
  SensitivityElements el = elements(fit_draw(900, 5));
  CHECK(std::fabs(mean(el.psi_sigma)) < 1e-10 * el.sigma2);
  CHECK(std::fabs(mean(el.psi_nu)) < 1e-10 * el.nu2);
}

TEST_CASE("adjusted standard errors match a row bootstrap with frozen nuisances") {
  AttEstimate est = fit_draw(2000, 11);
  SensitivityElements el = elements(est);
  Scenario sc{0.15, 0.15, 0.7, ""};
  SensitivityReport rep = adjusted_bounds(el, sc, 0.9);

  const int n = est.n, nboot = 2000;
  const double c_d = sc.cf_d / (1.0 - sc.cf_d);
  Rng rng(99);
  Eigen::VectorXd tminus(nboot), tplus(nboot);
  for (int b = 0; b < nboot; ++b) {
    double sum_d = 0.0;
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) {
      idx[i] = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
      sum_d += est.treat[idx[i]];
    }
    double p = sum_d / n;
    double theta = 0.0, s2 = 0.0, v2 = 0.0;
    for (int i : idx) {
      double d = est.treat[i], m = est.nuisance.m_hat[i];
      double alpha = d / p - (1.0 - d) * m / (p * (1.0 - m));
      double g = d * est.nuisance.g1_hat[i] + (1.0 - d) * est.nuisance.g0_hat[i];
      theta += alpha * (est.delta_y[i] - est.nuisance.g0_hat[i]);
      s2 += (est.delta_y[i] - g) * (est.delta_y[i] - g);
      v2 += alpha * alpha;
    }
    theta /= n;
    s2 /= n;
    v2 /= n;
    double bias = std::fabs(sc.rho) * std::sqrt(sc.cf_y * c_d * s2 * v2);
    tminus[b] = theta - bias;
    tplus[b] = theta + bias;
  }
  CHECK(sd(tminus) == doctest::Approx(rep.se_minus).epsilon(0.10));
  CHECK(sd(tplus) == doctest::Approx(rep.se_plus).epsilon(0.10));
}

TEST_CASE("robustness value agrees with a bisection oracle and closes the gap") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    AttEstimate est = fit_draw(250, 100 + trial);
    SensitivityElements el = elements(est);
    double h0 = est.theta_hat - (0.5 + 2.0 * rng.uniform());
    double rho = trial % 2 ? -0.8 : 0.6;
    double rv = robustness_value(el, h0, rho);
    CHECK(rv > 0.0);
    CHECK(rv < 1.0);

    double gap = std::fabs(el.theta_hat - h0);
    auto bound_at = [&](double c) { return bias_bound(el, {c, c, rho, ""}).b; };
    CHECK(bound_at(rv) == doctest::Approx(gap).epsilon(1e-8));
    double rv_oracle = oracles::bisect([&](double c) { return bound_at(c) - gap; },
                                       0.0, 1.0 - 1e-9, 1e-12);
    CHECK(rv == doctest::Approx(rv_oracle).epsilon(1e-10));
  }
}

TEST_CASE("robustness value is zero exactly at the null") {
  SensitivityElements el = elements(fit_draw(300, 7));
  CHECK(robustness_value(el, el.theta_hat, 1.0) == 0.0);
}

TEST_CASE("inference-adjusted robustness value sits below the point version") {
  AttEstimate est = fit_draw(1200, 19);
  SensitivityElements el = elements(est);
  double z = normal_quantile(0.9);

  // null well outside the one-sided interval: 0 < rv_a <= rv
  double h0 = el.theta_hat - 6.0 * el.se - 1.0;
  double rv = robustness_value(el, h0, 1.0);
  double rv_a = robustness_value_a(el, h0, 1.0, 0.9);
  CHECK(rv_a > 0.0);
  CHECK(rv_a <= rv);
  // at rv_a the lower confidence bound touches the null
  BiasBound bb = bias_bound(el, {rv_a, rv_a, 1.0, ""});
  double se_minus = std::sqrt((el.psi_theta - bb.psi_b).array().square().mean() / el.n);
  double residual = (el.theta_hat - h0) - bb.b - z * se_minus;
  CHECK(std::fabs(residual) < 1e-5);

  // null already inside the interval: nothing to explain away
  CHECK(robustness_value_a(el, el.theta_hat - 0.5 * z * el.se, 1.0, 0.9) == 0.0);

  // null above the estimate: the upper-side bound is the binding one
  double h0_up = el.theta_hat + 6.0 * el.se + 1.0;
  double rv_a_up = robustness_value_a(el, h0_up, 1.0, 0.9);
  CHECK(rv_a_up > 0.0);
  CHECK(rv_a_up <= robustness_value(el, h0_up, 1.0));
  BiasBound bu = bias_bound(el, {rv_a_up, rv_a_up, 1.0, ""});
  double se_plus = std::sqrt((el.psi_theta + bu.psi_b).array().square().mean() / el.n);
  CHECK(std::fabs((h0_up - el.theta_hat) - bu.b - z * se_plus) < 1e-5);
}

TEST_CASE("uncorrelated confounding has no robustness value but valid bounds") {
  SensitivityElements el = elements(fit_draw(400, 23));
  CHECK_THROWS_AS(robustness_value(el, 0.0, 0.0), RhoZero);
  SensitivityReport rep = adjusted_bounds(el, {0.2, 0.2, 0.0, ""}, 0.9);
  CHECK(std::isnan(rep.rv));
  CHECK(std::isnan(rep.rv_a));
  CHECK(rep.theta_minus == rep.theta);  // |rho| = 0 kills the bound
}

TEST_CASE("invalid inputs are rejected") {
  SensitivityElements el = elements(synthetic_estimate(1.0));
  CHECK_THROWS_AS(robustness_value(el, 0.0, 1.5), InvalidArgument);
  CHECK_THROWS_AS((Scenario{1.0, 0.1, 1.0, ""}).validate(), InvalidArgument);
  CHECK_THROWS_AS((Scenario{0.1, -0.1, 1.0, ""}).validate(), InvalidArgument);
  CHECK_THROWS_AS((Scenario{0.1, 0.1, -1.2, ""}).validate(), InvalidArgument);
  CHECK_THROWS_AS(adjusted_bounds(el, {0.1, 0.1, 1.0, ""}, 0.0), InvalidArgument);
  CHECK_THROWS_AS(robustness_value_a(el, 0.0, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(contour_grid(el, 0.3, 0.3, 1, BoundSide::kLower), InvalidArgument);
  CHECK_THROWS_AS(contour_grid(el, 0.0, 0.3, 5, BoundSide::kLower), InvalidArgument);
  CHECK_THROWS_AS(contour_grid(el, 0.3, 0.3, 5, BoundSide::kLower, 1.5), InvalidArgument);
}

TEST_CASE("report bounds are ordered and symmetric about the estimate") {
  SensitivityElements el = elements(fit_draw(2000, 29));
  SensitivityReport rep = adjusted_bounds(el, {0.12, 0.12, 0.8, ""}, 0.9);
  CHECK(rep.ell_minus < rep.theta_minus);
  CHECK(rep.theta_minus < rep.theta);
  CHECK(rep.theta < rep.theta_plus);
  CHECK(rep.theta_plus < rep.u_plus);
  double scale = std::fabs(rep.theta) + 1.0;
  CHECK(std::fabs(rep.theta_minus + rep.theta_plus - 2.0 * rep.theta) < 1e-13 * scale);
  // reported rv matches the direct call on the same elements
  CHECK(rep.rv == robustness_value(el, 0.0, 0.8));

  // adjusted ses follow the plug-in formula exactly
  BiasBound bb = bias_bound(el, rep.scenario);
  double want_minus = std::sqrt((el.psi_theta - bb.psi_b).array().square().mean() /
                                static_cast<double>(el.n));
  double want_plus = std::sqrt((el.psi_theta + bb.psi_b).array().square().mean() /
                               static_cast<double>(el.n));
  CHECK(rep.se_minus == doctest::Approx(want_minus).epsilon(1e-15));
  CHECK(rep.se_plus == doctest::Approx(want_plus).epsilon(1e-15));
}

TEST_CASE("benchmarking a pure-noise covariate lands on the floors") {
  DgpConfig cfg;
  cfg.n = 5000;
  cfg.seed = 37;
  TwoByTwoView v = canonical_2x2(draw_sample(cfg));
  // append an irrelevant covariate, then price its removal
  TwoByTwoView vj = v;
  vj.xmat.resize(v.xmat.rows(), v.xmat.cols() + 1);
  vj.xmat.leftCols(v.xmat.cols()) = v.xmat;
  Rng rng(41);
  for (int i = 0; i < v.n(); ++i) vj.xmat(i, v.xmat.cols()) = rng.normal();
  vj.covariate_names.push_back("junk");

  LearnerSpec ls;
  ls.seed = 43;
  Scenario sc = benchmark(vj, ls, {"junk"});
  CHECK(sc.cf_y == 0.001);
  CHECK(sc.cf_d == 0.001);
  CHECK(std::fabs(sc.rho) <= 1.0);
  CHECK(sc.label == "benchmark:junk");
  CHECK_NOTHROW(sc.validate());
}

TEST_CASE("benchmarking a propensity-relevant covariate prices it above the floor") {
  DgpConfig cfg;
  cfg.n = 5000;
  cfg.seed = 47;
  TwoByTwoView v = canonical_2x2(draw_sample(cfg));
  LearnerSpec ls;
  ls.seed = 53;
  Scenario sc = benchmark(v, ls, {"z1"});
  CHECK(sc.cf_d > 0.01);
  CHECK(sc.cf_y >= 0.001);
  CHECK(sc.cf_d < 1.0);
  CHECK(sc.cf_y < 1.0);
  CHECK(std::fabs(sc.rho) <= 1.0);
  CHECK(sc.label == "benchmark:z1");

  Scenario both = benchmark(v, ls, {"z1", "z2"});
  CHECK(both.label == "benchmark:z1+z2");
  CHECK(both.cf_d >= sc.cf_d);

  CHECK_THROWS_AS(benchmark(v, ls, {"zz9"}), UnknownCovariate);
  CHECK_THROWS_AS(benchmark(v, ls, {}), InvalidArgument);
}

TEST_CASE("pretest scenarios scale the worst placebo robustness value") {
  GtResult cell_a;
  cell_a.spec = {3, 1, 2, 0, ControlGroup::kNeverTreated};
  cell_a.estimate = synthetic_estimate(0.4);
  GtResult cell_b;
  cell_b.spec = {4, 1, 2, 0, ControlGroup::kNeverTreated};
  cell_b.estimate = synthetic_estimate(1.3);  // larger placebo: the binding cell

  double rv_a = robustness_value(elements(cell_a.estimate), 0.0, 1.0);
  double rv_b = robustness_value(elements(cell_b.estimate), 0.0, 1.0);
  REQUIRE(rv_b > rv_a);

  Scenario k1 = pretest_scenario({cell_a, cell_b}, 1.0, 1.0);
  CHECK(k1.cf_y == k1.cf_d);
  CHECK(k1.cf_y == rv_b);
  CHECK(k1.label == "pretest:g=4,t_eval=2");
  CHECK(k1.rho == 1.0);

  Scenario k2 = pretest_scenario({cell_a, cell_b}, 2.0, 1.0);
  CHECK(k2.cf_y == 2.0 * rv_b);

  Scenario huge = pretest_scenario({cell_a, cell_b}, 1e6, 1.0);
  CHECK(huge.cf_y == 1.0 - 1e-9);
  CHECK_NOTHROW(huge.validate());

  // an exactly-zero placebo prices to zero
  GtResult zero = cell_a;
  zero.estimate.theta_hat = 0.0;
  CHECK(pretest_scenario({zero}, 1.0, 1.0).cf_y == 0.0);
}

TEST_CASE("pretest rejects misuse") {
  GtResult post;
  post.spec = {3, 2, 3, 0, ControlGroup::kNeverTreated};
  post.estimate = synthetic_estimate(0.5);
  CHECK_THROWS_AS(pretest_scenario({post}, 1.0, 1.0), InvalidArgument);

  // anticipation shifts the pre-treatment boundary
  GtResult antic;
  antic.spec = {4, 2, 3, 1, ControlGroup::kNeverTreated};
  antic.estimate = synthetic_estimate(0.5);
  CHECK_THROWS_AS(pretest_scenario({antic}, 1.0, 1.0), InvalidArgument);

  CHECK_THROWS_AS(pretest_scenario({}, 1.0, 1.0), NoPrePeriods);
  GtResult pre;
  pre.spec = {3, 1, 2, 0, ControlGroup::kNeverTreated};
  pre.estimate = synthetic_estimate(0.5);
  CHECK_THROWS_AS(pretest_scenario({pre}, 0.0, 1.0), InvalidArgument);
}

TEST_CASE("contour grids share arithmetic with the report path") {
  SensitivityElements el = elements(fit_draw(1500, 59));
  const int ng = 6;
  ContourGrid point = contour_grid(el, 0.3, 0.25, ng, BoundSide::kLower);
  REQUIRE(point.values.rows() == ng);
  REQUIRE(point.values.cols() == ng);
  CHECK(point.cf_y_values[0] == 0.0);
  CHECK(point.cf_y_values[ng - 1] == 0.3);
  CHECK(point.cf_d_values[ng - 1] == 0.25);

  // zero rows and columns reproduce the unadjusted estimate exactly
  for (int j = 0; j < ng; ++j) {
    CHECK(point.values(0, j) == el.theta_hat);
    CHECK(point.values(j, 0) == el.theta_hat);
  }

  // every cell equals the standalone report for that scenario, bit for bit
  ContourGrid conf = contour_grid(el, 0.3, 0.25, ng, BoundSide::kLower, 0.9);
  ContourGrid upper = contour_grid(el, 0.3, 0.25, ng, BoundSide::kUpper, 0.9);
  for (int i : {1, 3, 5}) {
    for (int j : {2, 4}) {
      Scenario sc{point.cf_y_values[i], point.cf_d_values[j], 1.0, ""};
      SensitivityReport rep = adjusted_bounds(el, sc, 0.9);
      CHECK(point.values(i, j) == rep.theta_minus);
      CHECK(conf.values(i, j) == rep.ell_minus);
      CHECK(upper.values(i, j) == rep.u_plus);
    }
  }

  // the lower point bound can only fall as either axis grows
  for (int i = 0; i < ng; ++i)
    for (int j = 1; j < ng; ++j) {
      CHECK(point.values(i, j) <= point.values(i, j - 1));
      CHECK(point.values(j, i) <= point.values(j - 1, i));
    }
}

}  // TEST_SUITE
