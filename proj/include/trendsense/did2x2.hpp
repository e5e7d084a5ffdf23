#pragma once

#include <Eigen/Dense>
#include <optional>

#include "trendsense/learners.hpp"
#include "trendsense/panel.hpp"

namespace trendsense {

/* DML ATT estimation in the 2x2 design. The orthogonal score is
 *   psi(W, theta) = alpha_i * (dY_i - g0_i) - (D_i / p) * theta
 * with the odds-weighted Riesz representer
 *   alpha_i = D_i/p - (1-D_i) m_i / (p (1-m_i)),
 * solved analytically for theta (the score is affine in theta). The
 * normalized variant rescales the control weights by their sample mean
 * (Hajek form), which zeroes the sample mean of alpha exactly. */

struct AttEstimate {
  double theta_hat = 0.0;
  double se = 0.0;  // sd(psi)/sqrt(n), no dof correction
  int n = 0;
  Eigen::VectorXd psi;    // influence values at theta_hat, mean 0
  Eigen::VectorXd riesz;  // alpha_i
  bool normalized = false;
  NuisanceFit nuisance;
  // the data slice the estimate was computed on (kept for sensitivity)
  Eigen::VectorXd delta_y;
  Eigen::VectorXd treat;
  std::optional<GtMeta> meta;
};

Eigen::VectorXd riesz_values(const TwoByTwoView& view, const NuisanceFit& fit, bool normalized);

AttEstimate att_dml(const TwoByTwoView& view, const NuisanceFit& fit, bool normalized = true);

struct Interval {
  double lo, hi;
};
enum class Sides { kTwo, kLower, kUpper };

// kLower -> [theta - z_level * se, +inf), kUpper -> (-inf, theta + z_level * se]
Interval confidence_interval(const AttEstimate& est, double level, Sides sides = Sides::kTwo);

}  // namespace trendsense
