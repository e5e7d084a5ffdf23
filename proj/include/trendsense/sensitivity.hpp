#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "trendsense/did2x2.hpp"
#include "trendsense/didmulti.hpp"

namespace trendsense {

/* Sensitivity engine for violations of conditional parallel trends. A
 * violation scenario (cf_y, cf_d, rho) bounds the bias of the short-model
 * ATT via
 *   bias^2 <= rho^2 * cf_y * c_d * sigma^2 * nu^2,   c_d = cf_d / (1 - cf_d),
 * where sigma^2 is the residual variance of dY given (D, X), nu^2 the second
 * moment of the Riesz representer, and cf_d is stored in the bounded
 * odds-decrease form (value in [0,1)). */

struct SensitivityElements {
  double sigma2 = 0.0;  // mean((dY - g(D,X))^2), g(D,X) = D*g1 + (1-D)*g0
  double nu2 = 0.0;     // mean(alpha^2)
  double theta_hat = 0.0;
  double se = 0.0;
  int n = 0;
  Eigen::VectorXd psi_sigma;  // (dY - g)^2 - sigma2
  Eigen::VectorXd psi_nu;     // alpha^2 - nu2
  Eigen::VectorXd psi_theta;  // influence values of theta_hat
  bool degenerate_sigma = false;
};

SensitivityElements elements(const AttEstimate& est);

struct Scenario {
  double cf_y = 0.0;  // share of residual dY variation explained by A, in [0,1)
  double cf_d = 0.0;  // relative decrease in average propensity odds, in [0,1)
  double rho = 1.0;   // correlation of the two confounding channels
  std::string label;
  void validate() const;
};

struct BiasBound {
  double b = 0.0;
  Eigen::VectorXd psi_b;  // delta-method influence of b
};

BiasBound bias_bound(const SensitivityElements& el, const Scenario& sc);

struct SensitivityReport {
  double theta = 0.0, se = 0.0;
  double theta_minus = 0.0, theta_plus = 0.0;
  double se_minus = 0.0, se_plus = 0.0;
  double ell_minus = 0.0, u_plus = 0.0;  // one-sided bounds at `level`
  double rv = 0.0, rv_a = 0.0;           // NaN when undefined (rho = 0 or degenerate)
  Scenario scenario;
  double h0 = 0.0;
  double level = 0.0;
};

SensitivityReport adjusted_bounds(const SensitivityElements& el, const Scenario& sc,
                                  double level, double h0 = 0.0);

// smallest symmetric cf_y = cf_d = c with bias bound equal to |theta - h0|;
// closed form from c^2/(1-c) * rho^2 sigma^2 nu^2 = (theta - h0)^2
double robustness_value(const SensitivityElements& el, double h0, double rho);

// smallest c at which the one-sided confidence bound on the h0 side reaches
// h0; bisection on [0, RV]
double robustness_value_a(const SensitivityElements& el, double h0, double rho, double level);

// refits without `leave_out` covariates on shared folds and converts the
// explanatory-power loss into a scenario (floored at 0.001); rho is backed out
// of the estimate gap and clipped to [-1, 1]
Scenario benchmark(const TwoByTwoView& view, const LearnerSpec& lspec,
                   const std::vector<std::string>& leave_out);

// cf_y = cf_d = k * max pre-treatment robustness value (h0 = 0)
Scenario pretest_scenario(const std::vector<GtResult>& pre_results, double k, double rho);

enum class BoundSide { kLower, kUpper };

struct ContourGrid {
  Eigen::VectorXd cf_y_values;  // rows
  Eigen::VectorXd cf_d_values;  // columns
  Eigen::MatrixXd values;
  BoundSide side = BoundSide::kLower;
  double rho = 1.0;
  std::optional<double> level;  // set: confidence bounds; unset: point bounds
  double theta_hat = 0.0;
};

ContourGrid contour_grid(const SensitivityElements& el, double cf_y_max, double cf_d_max,
                         int n_grid, BoundSide side, std::optional<double> level = {},
                         double rho = 1.0);

}  // namespace trendsense
