#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trendsense/panel.hpp"
#include "trendsense/sensitivity.hpp"
#include "trendsense/stats.hpp"

namespace trendsense {

/* Simulation DGP with an unobserved confounder A:
 *   X ~ N(0, I_5), Ztilde = (exp(.5 X1), 10 + X2/(1+exp(X1)),
 *       (.6 + X1 X3/25)^3, (20 + X2 + X4)^2, X5), Z standardized per sample
 *   f_reg(V) = 210 + 27.4 V1 + 13.7 (V2 + V3 + V4)
 *   f_ps(V)  = 0.75 (-V1 + .5 V2 - .25 V3 - .1 V4)
 *   A ~ U(-1,1);  p = clip(logistic(f_ps(Z)) + gamma_a A, .1, .9);  D = 1{p >= U}
 *   Y[1] = f_reg(Z) + sigma_eps e0
 *   Y[2] = D theta (Z5 + 1) + f_reg(Z) + beta_a A + sigma_eps e1
 * so dY = D theta (Z5+1) + beta_a A + sigma_eps (e1 - e0): the confounder
 * enters only the second-period outcome and therefore survives differencing
 * (entering it in both periods would cancel and leave nothing to detect). */

struct DgpConfig {
  double theta = 5.0;
  double gamma_a = 0.0;  // confounder loading in the propensity
  double beta_a = 0.0;   // confounder loading in the period-2 outcome
  double sigma_eps = 1.5;
  int n = 1000;
  uint64_t seed = 0;
  // true: nonlinear Ztilde transforms + standardization; false: raw X features
  bool use_z_transform = true;
  // standardization divisor: sd (false, default) or variance (true)
  bool divide_by_variance = false;
  double clip_lo = 0.1, clip_hi = 0.9;
  void validate() const;
};

PanelDataset draw_sample(const DgpConfig& cfg);

// canonical 2x2 view with the hidden confounder appended as covariate "a"
TwoByTwoView long_view(const PanelDataset& ds);

struct OracleScenario {
  double cf_y = 0.0, cf_d = 0.0, rho = 1.0;
  double s = 0.0;  // sqrt(sigma2 * nu2) of the short model
  double theta_short = 0.0, theta_long = 0.0;
};

struct CalibrationResult {
  double gamma_a = 0.0, beta_a = 0.0;
  OracleScenario oracle;
};

/* Finds (gamma_a, beta_a) such that the population cf_d and cf_y equal
 * target_cf within tol, on a single super-population draw of superpop_n rows.
 * cf_d depends only on gamma_a, so one gamma pass followed by one beta pass
 * converges; the alternation loop re-verifies and throws
 * CalibrationDiverged after 60 rounds if not. */
CalibrationResult calibrate_confounding(double target_cf, int superpop_n, double tol = 0.005,
                                        uint64_t seed = 0, DgpConfig base = DgpConfig{});

// population scenario implied by base.gamma_a / base.beta_a on a single
// super-population draw (same in-sample fits the calibration uses)
OracleScenario evaluate_oracle(const DgpConfig& base, int superpop_n, uint64_t seed);

struct RepRecord {
  double theta_s = 0, se_s = 0, theta_minus = 0, theta_plus = 0, se_minus = 0;
  double theta_long = 0, se_long = 0;
  double ell_s = 0, ell_minus = 0, ell_long = 0, u_plus = 0;
  double rv = 0, rv_rho1 = 0, rv_a = 0;
  bool cover_s = false, cover_minus = false, cover_long = false;
  bool ok = false;
  std::string error;
};

struct SummaryStat {
  double mean = 0.0;
  double sd = 0.0;  // NaN when fewer than 2 successful replications
};

struct SimTables {
  DgpConfig config;
  OracleScenario oracle;
  double level = 0.9;
  uint64_t seed = 0;
  bool normalized = false;
  int reps_requested = 0, reps_done = 0, failures = 0;
  std::vector<RepRecord> reps;
  std::vector<std::pair<std::string, SummaryStat>> point_stats;  // point estimates
  std::vector<std::pair<std::string, SummaryStat>> limit_stats;  // confidence limits
  std::vector<std::pair<std::string, double>> coverage;
  Series hist_theta_minus, hist_ell_minus;  // standardized, 40 bins on [-4,4]
  Series dens_theta_s, dens_theta_minus, dens_rv;
};

/* Per replication: short and long DML fits, oracle-scenario bounds, one-sided
 * limits at `level`, RV at h0 = theta (both oracle rho and rho = 1), RV_a.
 * Replication r uses seeds derived from (seed, r), so tables are identical
 * for any thread count. Per-rep failures are recorded and excluded. */
SimTables run_monte_carlo(const DgpConfig& cfg, const OracleScenario& oracle, int reps,
                          double level, uint64_t seed, int threads = 1,
                          bool normalized = false);

}  // namespace trendsense
