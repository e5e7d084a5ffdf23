#include "trendsense/did2x2.hpp"

#include <cmath>
#include <limits>

#include "trendsense/errors.hpp"
#include "trendsense/stats.hpp"

namespace trendsense {

Eigen::VectorXd riesz_values(const TwoByTwoView& view, const NuisanceFit& fit, bool normalized) {
  double p = fit.p_hat;
  Eigen::ArrayXd d = view.treat.array();
  Eigen::ArrayXd m = fit.m_hat.array();
  Eigen::ArrayXd control_w = (1.0 - d) * m / (1.0 - m);
  if (normalized) {
    double h = control_w.mean();
    return (d / p - control_w / h).matrix();
  }
  return (d / p - control_w / p).matrix();
}

AttEstimate att_dml(const TwoByTwoView& view, const NuisanceFit& fit, bool normalized) {
  const long n = view.treat.size();
  if (view.n_treated < 1 || view.n_control < 1 || fit.p_hat <= 0.0 || fit.p_hat >= 1.0)
    throw DegenerateGroups("att_dml: need both treated and control units");
  if (fit.m_hat.size() != n || fit.g0_hat.size() != n)
    throw InvalidArgument("att_dml: nuisance fit does not match the view");

  AttEstimate est;
  est.n = static_cast<int>(n);
  est.normalized = normalized;
  est.nuisance = fit;
  est.delta_y = view.delta_y;
  est.treat = view.treat;
  est.meta = view.meta;
  est.riesz = riesz_values(view, fit, normalized);

  Eigen::ArrayXd resid = view.delta_y.array() - fit.g0_hat.array();
  Eigen::ArrayXd moment = est.riesz.array() * resid;
  // -d/dtheta of the score is mean(D)/p = 1 exactly (p is the sample mean)
  est.theta_hat = moment.mean();
  est.psi = (moment - view.treat.array() / fit.p_hat * est.theta_hat).matrix();
  est.se = std::sqrt(est.psi.array().square().mean() / static_cast<double>(n));
  return est;
}

Interval confidence_interval(const AttEstimate& est, double level, Sides sides) {
  if (!(level > 0.0 && level < 1.0))
    throw InvalidArgument("confidence_interval: level outside (0,1)");
  const double inf = std::numeric_limits<double>::infinity();
  if (sides == Sides::kTwo) {
    double z = normal_quantile(0.5 + level / 2.0);
    return {est.theta_hat - z * est.se, est.theta_hat + z * est.se};
  }
  double z = normal_quantile(level);
  if (sides == Sides::kLower) return {est.theta_hat - z * est.se, inf};
  return {-inf, est.theta_hat + z * est.se};
}

}  // namespace trendsense
