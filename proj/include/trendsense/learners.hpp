#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "trendsense/panel.hpp"

namespace trendsense {

/* Nuisance learners (OLS/ridge, logistic via IRLS, isotonic calibration) and
 * the K-fold cross-fitting engine. Everything downstream consumes the
 * out-of-fold predictions collected in NuisanceFit. */

// estimated propensities are clipped to [kPropensityClip, 1-kPropensityClip]
constexpr double kPropensityClip = 0.01;

struct LinearModel {
  Eigen::VectorXd coefficients;  // one per covariate
  double intercept = 0.0;
  double ridge_lambda = 0.0;
  double predict_one(const Eigen::RowVectorXd& x) const {
    return intercept + x * coefficients;
  }
  Eigen::VectorXd predict(const Eigen::MatrixXd& xmat) const {
    return (xmat * coefficients).array() + intercept;
  }
};

struct LogitModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  bool converged = false;
  int iterations = 0;
  // probabilities, strictly inside (0,1) via linear-predictor clamping
  Eigen::VectorXd predict(const Eigen::MatrixXd& xmat) const;
};

struct IsotonicMap {
  Eigen::VectorXd breakpoints;  // increasing block left edges (score scale)
  Eigen::VectorXd levels;       // non-decreasing block values
  double operator()(double score) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& scores) const;
};

// minimizes sum (y - b0 - x'b)^2 + lambda * |b|^2 (intercept unpenalized),
// solved by normal equations
LinearModel fit_ols(const Eigen::MatrixXd& xmat, const Eigen::VectorXd& y, double lambda = 0.0);

// IRLS on the ridge-stabilized (1e-8) Bernoulli log-likelihood
LogitModel fit_logistic(const Eigen::MatrixXd& xmat, const Eigen::VectorXd& d,
                        int max_iter = 100, double tol = 1e-8);

// least-squares monotone fit by pool-adjacent-violators; exact score ties are
// pooled before merging
IsotonicMap isotonic_calibrate(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

struct LearnerSpec {
  enum class Outcome { kOls, kRidge };
  Outcome outcome = Outcome::kOls;
  double ridge_lambda = 0.0;
  int folds = 5;
  bool calibrate = false;
  uint64_t seed = 0;
};

struct NuisanceFit {
  Eigen::VectorXd g0_hat;   // out-of-fold E[dY | D=0, X]
  Eigen::VectorXd g1_hat;   // out-of-fold E[dY | D=1, X]
  Eigen::VectorXd m_hat;    // out-of-fold propensity, clipped
  std::vector<int> folds;   // fold index per observation
  double p_hat = 0.0;       // sample treated share
  LearnerSpec spec;
};

// stratified-by-treatment fold draw; every training set must retain at least
// two units of each class (redrawn up to 20 times, then FoldDegenerate)
std::vector<int> make_folds(const Eigen::VectorXd& treat, int k, uint64_t seed);

NuisanceFit crossfit(const TwoByTwoView& view, const LearnerSpec& spec);
// same, with a caller-supplied fold assignment (used to share folds between
// full and leave-out refits when benchmarking)
NuisanceFit crossfit_with_folds(const TwoByTwoView& view, const LearnerSpec& spec,
                                const std::vector<int>& folds);

}  // namespace trendsense
