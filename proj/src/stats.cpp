#include "trendsense/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace trendsense {

double mean(const Eigen::VectorXd& x) {
  return x.size() ? x.mean() : std::numeric_limits<double>::quiet_NaN();
}

double sd(const Eigen::VectorXd& x) {
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double m = x.mean();
  return std::sqrt((x.array() - m).square().mean());
}

double skewness(const Eigen::VectorXd& x) {
  double m = x.mean();
  double s = sd(x);
  if (!(s > 0)) return 0.0;
  return ((x.array() - m) / s).cube().mean();
}

double correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double mx = x.mean(), my = y.mean();
  Eigen::ArrayXd cx = x.array() - mx, cy = y.array() - my;
  double denom = std::sqrt(cx.square().sum() * cy.square().sum());
  if (!(denom > 0)) return 0.0;
  return (cx * cy).sum() / denom;
}

/* Wichura (1988) algorithm AS 241, PPND16: double-precision normal quantile. */
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
  double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

Series histogram(const Eigen::VectorXd& values, int bins, double lo, double hi) {
  Series out;
  out.x.resize(bins);
  out.y = Eigen::VectorXd::Zero(bins);
  double w = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) out.x[b] = lo + (b + 0.5) * w;
  long n = values.size();
  if (n == 0 || !(w > 0)) return out;
  for (long i = 0; i < n; ++i) {
    double v = values[i];
    if (v < lo || v >= hi) continue;
    int b = std::min(bins - 1, static_cast<int>((v - lo) / w));
    out.y[b] += 1.0;
  }
  out.y /= static_cast<double>(n) * w;
  return out;
}

Series kde(const Eigen::VectorXd& values, int grid_points) {
  Series out;
  long n = values.size();
  if (n < 2 || grid_points < 2) return out;
  double s = sd(values);
  if (!(s > 0)) return out;
  double bw = 1.06 * s * std::pow(static_cast<double>(n), -0.2);
  double lo = values.minCoeff() - 3.0 * bw;
  double hi = values.maxCoeff() + 3.0 * bw;
  out.x.resize(grid_points);
  out.y.resize(grid_points);
  const double norm = 1.0 / (n * bw * std::sqrt(2.0 * M_PI));
  for (int g = 0; g < grid_points; ++g) {
    double x = lo + (hi - lo) * g / (grid_points - 1);
    double acc = 0.0;
    for (long i = 0; i < n; ++i) {
      double z = (x - values[i]) / bw;
      acc += std::exp(-0.5 * z * z);
    }
    out.x[g] = x;
    out.y[g] = acc * norm;
  }
  return out;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads < 1) threads = 1;
  if (threads == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int k = std::min(threads, n);
  pool.reserve(k);
  for (int t = 0; t < k; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace trendsense
