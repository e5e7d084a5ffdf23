#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace trendsense {

double mean(const Eigen::VectorXd& x);
// population form: sqrt(mean((x - mean)^2)), no dof correction
double sd(const Eigen::VectorXd& x);
double skewness(const Eigen::VectorXd& x);
double correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// standard normal quantile (Wichura's PPND16) and cdf
double normal_quantile(double p);
double normal_cdf(double x);

// two-column series (x grid, y value) for histogram/density files
struct Series {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

// density-normalized histogram over [lo, hi]; x = bin centers
Series histogram(const Eigen::VectorXd& values, int bins, double lo, double hi);
// Gaussian KDE with Silverman bandwidth, evaluated on an equispaced grid
Series kde(const Eigen::VectorXd& values, int grid_points = 200);

// runs fn(i) for i in [0,n) across `threads` workers; fn must write results
// into caller-owned slots so the outcome is independent of scheduling
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace trendsense
