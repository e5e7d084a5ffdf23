#include "trendsense/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trendsense/errors.hpp"
#include "trendsense/stats.hpp"

namespace trendsense {

namespace {

constexpr double kBenchmarkFloor = 0.001;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_square_se(const Eigen::VectorXd& v) {
  return std::sqrt(v.array().square().mean() / static_cast<double>(v.size()));
}

struct BoundsCore {
  double theta_minus, theta_plus, se_minus, se_plus;
  double ell_minus = kNaN, u_plus = kNaN;
};

// shared by adjusted_bounds and contour_grid so grid cells match report values
// bit for bit
BoundsCore compute_bounds(const SensitivityElements& el, const BiasBound& bb,
                          std::optional<double> level) {
  BoundsCore out{};
  out.theta_minus = el.theta_hat - bb.b;
  out.theta_plus = el.theta_hat + bb.b;
  out.se_minus = mean_square_se(el.psi_theta - bb.psi_b);
  out.se_plus = mean_square_se(el.psi_theta + bb.psi_b);
  if (level) {
    double z = normal_quantile(*level);
    out.ell_minus = out.theta_minus - z * out.se_minus;
    out.u_plus = out.theta_plus + z * out.se_plus;
  }
  return out;
}

}  // namespace

void Scenario::validate() const {
  if (!(cf_y >= 0.0 && cf_y < 1.0))
    throw InvalidArgument("scenario: cf_y must lie in [0,1)");
  if (!(cf_d >= 0.0 && cf_d < 1.0))
    throw InvalidArgument("scenario: cf_d must lie in [0,1)");
  if (!(rho >= -1.0 && rho <= 1.0))
    throw InvalidArgument("scenario: rho must lie in [-1,1]");
}

SensitivityElements elements(const AttEstimate& est) {
  const long n = est.delta_y.size();
  if (est.nuisance.g1_hat.size() != n)
    throw MissingG1("elements: nuisance fit lacks g1 predictions");

  SensitivityElements el;
  el.n = est.n;
  el.theta_hat = est.theta_hat;
  el.se = est.se;
  el.psi_theta = est.psi;

  Eigen::ArrayXd d = est.treat.array();
  Eigen::ArrayXd ghat =
      d * est.nuisance.g1_hat.array() + (1.0 - d) * est.nuisance.g0_hat.array();
  Eigen::ArrayXd sq_resid = (est.delta_y.array() - ghat).square();
  el.sigma2 = sq_resid.mean();
  el.psi_sigma = (sq_resid - el.sigma2).matrix();

  Eigen::ArrayXd alpha_sq = est.riesz.array().square();
  el.nu2 = alpha_sq.mean();
  el.psi_nu = (alpha_sq - el.nu2).matrix();

  el.degenerate_sigma = el.sigma2 < 1e-20 * (1.0 + el.theta_hat * el.theta_hat);
  return el;
}

BiasBound bias_bound(const SensitivityElements& el, const Scenario& sc) {
  sc.validate();
  BiasBound bb;
  double c_d = sc.cf_d / (1.0 - sc.cf_d);
  bb.b = std::fabs(sc.rho) * std::sqrt(sc.cf_y * c_d * el.sigma2 * el.nu2);
  if (bb.b > 0.0) {
    bb.psi_b = (bb.b / 2.0) * (el.psi_sigma / el.sigma2 + el.psi_nu / el.nu2);
  } else {
    bb.b = 0.0;
    bb.psi_b = Eigen::VectorXd::Zero(el.psi_theta.size());
  }
  return bb;
}

SensitivityReport adjusted_bounds(const SensitivityElements& el, const Scenario& sc,
                                  double level, double h0) {
  if (!(level > 0.0 && level < 1.0))
    throw InvalidArgument("adjusted_bounds: level outside (0,1)");
  BiasBound bb = bias_bound(el, sc);
  BoundsCore core = compute_bounds(el, bb, level);

  SensitivityReport rep;
  rep.theta = el.theta_hat;
  rep.se = el.se;
  rep.theta_minus = core.theta_minus;
  rep.theta_plus = core.theta_plus;
  rep.se_minus = core.se_minus;
  rep.se_plus = core.se_plus;
  rep.ell_minus = core.ell_minus;
  rep.u_plus = core.u_plus;
  rep.scenario = sc;
  rep.h0 = h0;
  rep.level = level;
  rep.rv = kNaN;
  rep.rv_a = kNaN;
  if (sc.rho != 0.0 && !el.degenerate_sigma) {
    rep.rv = robustness_value(el, h0, sc.rho);
    rep.rv_a = robustness_value_a(el, h0, sc.rho, level);
  }
  return rep;
}

double robustness_value(const SensitivityElements& el, double h0, double rho) {
  if (rho == 0.0) throw RhoZero("robustness_value: undefined at rho = 0");
  if (!(rho >= -1.0 && rho <= 1.0))
    throw InvalidArgument("robustness_value: rho outside [-1,1]");
  if (el.degenerate_sigma || !(el.sigma2 * el.nu2 > 0.0))
    throw DegenerateSigma("robustness_value: sigma2 * nu2 is zero");
  double gap = el.theta_hat - h0;
  if (gap == 0.0) return 0.0;
  double q = gap * gap / (rho * rho * el.sigma2 * el.nu2);
  return 0.5 * (-q + std::sqrt(q * q + 4.0 * q));
}

double robustness_value_a(const SensitivityElements& el, double h0, double rho, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw InvalidArgument("robustness_value_a: level outside (0,1)");
  double rv = robustness_value(el, h0, rho);
  double gap = std::fabs(el.theta_hat - h0);
  bool lower_side = el.theta_hat >= h0;
  double z = normal_quantile(level);

  auto f = [&](double c) {
    Scenario sc{c, c, rho, ""};
    BiasBound bb = bias_bound(el, sc);
    double se_side =
        lower_side ? mean_square_se(el.psi_theta - bb.psi_b) : mean_square_se(el.psi_theta + bb.psi_b);
    return gap - bb.b - z * se_side;
  };

  if (f(0.0) <= 0.0) return 0.0;
  double lo = 0.0, hi = rv;
  while (hi - lo > 1e-8) {
    double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

Scenario benchmark(const TwoByTwoView& view, const LearnerSpec& lspec,
                   const std::vector<std::string>& leave_out) {
  if (leave_out.empty()) throw InvalidArgument("benchmark: leave_out is empty");
  std::vector<int> drop;
  for (const auto& name : leave_out) {
    auto it = std::find(view.covariate_names.begin(), view.covariate_names.end(), name);
    if (it == view.covariate_names.end())
      throw UnknownCovariate("benchmark: no covariate named '" + name + "'");
    drop.push_back(static_cast<int>(it - view.covariate_names.begin()));
  }

  TwoByTwoView short_view = view;
  short_view.xmat.resize(view.xmat.rows(), view.xmat.cols() - static_cast<long>(drop.size()));
  short_view.covariate_names.clear();
  long col = 0;
  for (long j = 0; j < view.xmat.cols(); ++j) {
    if (std::find(drop.begin(), drop.end(), static_cast<int>(j)) != drop.end()) continue;
    short_view.xmat.col(col++) = view.xmat.col(j);
    short_view.covariate_names.push_back(view.covariate_names[j]);
  }

  std::vector<int> folds = make_folds(view.treat, lspec.folds, lspec.seed);
  NuisanceFit fit_full = crossfit_with_folds(view, lspec, folds);
  NuisanceFit fit_short = crossfit_with_folds(short_view, lspec, folds);
  AttEstimate est_full = att_dml(view, fit_full, /*normalized=*/false);
  AttEstimate est_short = att_dml(short_view, fit_short, /*normalized=*/false);
  SensitivityElements el_full = elements(est_full);
  SensitivityElements el_short = elements(est_short);

  Scenario sc;
  sc.cf_y = std::max(kBenchmarkFloor, (el_short.sigma2 - el_full.sigma2) / el_short.sigma2);
  sc.cf_d = std::max(kBenchmarkFloor, (el_full.nu2 - el_short.nu2) / el_full.nu2);
  sc.cf_y = std::min(sc.cf_y, 1.0 - 1e-9);
  sc.cf_d = std::min(sc.cf_d, 1.0 - 1e-9);
  BiasBound bb = bias_bound(el_short, {sc.cf_y, sc.cf_d, 1.0, ""});
  if (bb.b > 0.0) {
    sc.rho = std::clamp((el_full.theta_hat - el_short.theta_hat) / bb.b, -1.0, 1.0);
  } else {
    sc.rho = 1.0;
  }
  sc.label = "benchmark:";
  for (size_t i = 0; i < leave_out.size(); ++i)
    sc.label += (i ? "+" : "") + leave_out[i];
  return sc;
}

Scenario pretest_scenario(const std::vector<GtResult>& pre_results, double k, double rho) {
  if (pre_results.empty()) throw NoPrePeriods("pretest_scenario: no pre-treatment results");
  if (!(k > 0.0)) throw InvalidArgument("pretest_scenario: k must be positive");
  double max_rv = 0.0;
  const GtResult* argmax = nullptr;
  for (const auto& r : pre_results) {
    if (r.spec.t_eval >= r.spec.g - r.spec.delta)
      throw InvalidArgument("pretest_scenario: cell (g=" + std::to_string(r.spec.g) +
                            ", t_eval=" + std::to_string(r.spec.t_eval) +
                            ") is not pre-treatment");
    double rv = robustness_value(elements(r.estimate), 0.0, rho);
    if (argmax == nullptr || rv > max_rv) {
      max_rv = rv;
      argmax = &r;
    }
  }
  Scenario sc;
  sc.cf_y = sc.cf_d = std::clamp(k * max_rv, 0.0, 1.0 - 1e-9);
  sc.rho = rho;
  sc.label = "pretest:g=" + std::to_string(argmax->spec.g) +
             ",t_eval=" + std::to_string(argmax->spec.t_eval);
  return sc;
}

ContourGrid contour_grid(const SensitivityElements& el, double cf_y_max, double cf_d_max,
                         int n_grid, BoundSide side, std::optional<double> level, double rho) {
  if (n_grid < 2) throw InvalidArgument("contour_grid: need at least a 2x2 grid");
  if (!(cf_y_max > 0.0 && cf_y_max < 1.0 && cf_d_max > 0.0 && cf_d_max < 1.0))
    throw InvalidArgument("contour_grid: axis maxima must lie in (0,1)");
  if (level && !(*level > 0.0 && *level < 1.0))
    throw InvalidArgument("contour_grid: level outside (0,1)");

  ContourGrid grid;
  grid.side = side;
  grid.rho = rho;
  grid.level = level;
  grid.theta_hat = el.theta_hat;
  grid.cf_y_values.setLinSpaced(n_grid, 0.0, cf_y_max);
  grid.cf_d_values.setLinSpaced(n_grid, 0.0, cf_d_max);
  grid.values.resize(n_grid, n_grid);
  for (int i = 0; i < n_grid; ++i) {
    for (int j = 0; j < n_grid; ++j) {
      Scenario sc{grid.cf_y_values[i], grid.cf_d_values[j], rho, ""};
      BiasBound bb = bias_bound(el, sc);
      BoundsCore core = compute_bounds(el, bb, level);
      if (side == BoundSide::kLower)
        grid.values(i, j) = level ? core.ell_minus : core.theta_minus;
      else
        grid.values(i, j) = level ? core.u_plus : core.theta_plus;
    }
  }
  return grid;
}

}  // namespace trendsense
