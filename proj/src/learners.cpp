#include "trendsense/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trendsense/errors.hpp"
#include "trendsense/rng.hpp"

namespace trendsense {

namespace {

constexpr double kIrlsRidge = 1e-8;
constexpr double kEtaClamp = 36.0;

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& xmat) {
  Eigen::MatrixXd xa(xmat.rows(), xmat.cols() + 1);
  xa.col(0).setOnes();
  xa.rightCols(xmat.cols()) = xmat;
  return xa;
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& eta) {
  return eta.array().min(kEtaClamp).max(-kEtaClamp).unaryExpr(
      [](double e) { return 1.0 / (1.0 + std::exp(-e)); });
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(idx.size(), m.cols());
  for (size_t r = 0; r < idx.size(); ++r) out.row(r) = m.row(idx[r]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (size_t r = 0; r < idx.size(); ++r) out[r] = v[idx[r]];
  return out;
}

}  // namespace

Eigen::VectorXd LogitModel::predict(const Eigen::MatrixXd& xmat) const {
  Eigen::VectorXd eta = (xmat * coefficients).array() + intercept;
  return sigmoid(eta);
}

double IsotonicMap::operator()(double score) const {
  // right-continuous step function: the block whose left edge is <= score
  const long n = breakpoints.size();
  long lo = 0, hi = n;  // first index with breakpoints[idx] > score
  while (lo < hi) {
    long mid = (lo + hi) / 2;
    if (breakpoints[mid] <= score)
      lo = mid + 1;
    else
      hi = mid;
  }
  long idx = std::max<long>(0, lo - 1);
  return levels[idx];
}

Eigen::VectorXd IsotonicMap::apply(const Eigen::VectorXd& scores) const {
  Eigen::VectorXd out(scores.size());
  for (long i = 0; i < scores.size(); ++i) out[i] = (*this)(scores[i]);
  return out;
}

LinearModel fit_ols(const Eigen::MatrixXd& xmat, const Eigen::VectorXd& y, double lambda) {
  if (xmat.rows() != y.size() || y.size() < 2)
    throw InvalidArgument("fit_ols: need matching rows and at least 2 observations");
  if (lambda < 0) throw InvalidArgument("fit_ols: negative ridge penalty");
  Eigen::MatrixXd xa = with_intercept(xmat);
  const long p = xa.cols();
  Eigen::MatrixXd a = xa.transpose() * xa;
  if (lambda > 0)
    for (long j = 1; j < p; ++j) a(j, j) += lambda;  // intercept unpenalized
  if (lambda == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    double emax = es.eigenvalues().cwiseAbs().maxCoeff();
    double emin = es.eigenvalues().cwiseAbs().minCoeff();
    if (!(emax > 0) || emin / emax < 1e-12)
      throw SingularDesign("fit_ols: X'X numerically singular (rcond < 1e-12)");
  }
  Eigen::VectorXd beta = a.ldlt().solve(xa.transpose() * y);
  LinearModel model;
  model.intercept = beta[0];
  model.coefficients = beta.tail(p - 1);
  model.ridge_lambda = lambda;
  return model;
}

LogitModel fit_logistic(const Eigen::MatrixXd& xmat, const Eigen::VectorXd& d,
                        int max_iter, double tol) {
  if (xmat.rows() != d.size() || d.size() < 2)
    throw InvalidArgument("fit_logistic: need matching rows and at least 2 observations");
  double dsum = d.sum();
  if (dsum == 0.0 || dsum == static_cast<double>(d.size()))
    throw OneClassOnly("fit_logistic: all labels identical");

  Eigen::MatrixXd xa = with_intercept(xmat);
  const long n = xa.rows(), p = xa.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd weighted(n, p);
  LogitModel model;
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd mu = sigmoid(xa * beta);
    Eigen::ArrayXd w = (mu.array() * (1.0 - mu.array())).max(1e-10).sqrt();
    weighted = xa.array().colwise() * w;
    Eigen::MatrixXd a = weighted.transpose() * weighted;
    a.diagonal().array() += kIrlsRidge;
    Eigen::VectorXd grad = xa.transpose() * (d - mu) - kIrlsRidge * beta;
    Eigen::VectorXd step = a.ldlt().solve(grad);
    beta += step;
    model.iterations = it;
    if (step.cwiseAbs().maxCoeff() < tol) {
      model.converged = true;
      break;
    }
  }
  // a pinned linear predictor means the data are (quasi-)separable: the
  // unpenalized optimum does not exist and the fit is penalty-determined
  if ((xa * beta).cwiseAbs().maxCoeff() > 30.0) model.converged = false;
  model.intercept = beta[0];
  model.coefficients = beta.tail(p - 1);
  return model;
}

IsotonicMap isotonic_calibrate(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  const long n = scores.size();
  if (n < 1 || labels.size() != n)
    throw InvalidArgument("isotonic_calibrate: need matching non-empty inputs");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });

  struct Block {
    double score;  // left edge
    double sum;
    double weight;
    double mean() const { return sum / weight; }
  };
  // exact ties must form a single block before any violation merging,
  // otherwise a merge can strand one tied observation in a different block
  std::vector<Block> pooled;
  for (long r = 0; r < n; ++r) {
    int i = order[r];
    if (!pooled.empty() && pooled.back().score == scores[i]) {
      pooled.back().sum += labels[i];
      pooled.back().weight += 1.0;
    } else {
      pooled.push_back({scores[i], labels[i], 1.0});
    }
  }

  std::vector<Block> blocks;
  for (const Block& pb : pooled) {
    blocks.push_back(pb);
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
      Block b = blocks.back();
      blocks.pop_back();
      blocks.back().sum += b.sum;
      blocks.back().weight += b.weight;
    }
  }

  // adjacent blocks with equal means are one step; keep the representation minimal
  std::vector<Block> merged;
  for (const Block& b : blocks) {
    if (!merged.empty() && merged.back().mean() == b.mean()) {
      merged.back().sum += b.sum;
      merged.back().weight += b.weight;
    } else {
      merged.push_back(b);
    }
  }

  IsotonicMap map;
  map.breakpoints.resize(merged.size());
  map.levels.resize(merged.size());
  for (size_t j = 0; j < merged.size(); ++j) {
    map.breakpoints[j] = merged[j].score;
    map.levels[j] = merged[j].mean();
  }
  return map;
}

std::vector<int> make_folds(const Eigen::VectorXd& treat, int k, uint64_t seed) {
  if (k < 2) throw InvalidArgument("make_folds: need at least 2 folds");
  const long n = treat.size();
  Rng rng(mix_seed(seed, 0xf01d5));
  for (int attempt = 0; attempt < 20; ++attempt) {
    std::vector<int> folds(n, -1);
    bool ok = true;
    for (int cls = 0; cls <= 1 && ok; ++cls) {
      std::vector<int> idx;
      for (long i = 0; i < n; ++i)
        if (static_cast<int>(treat[i]) == cls) idx.push_back(static_cast<int>(i));
      rng.shuffle(idx);
      std::vector<int> count(k, 0);
      for (size_t j = 0; j < idx.size(); ++j) {
        folds[idx[j]] = static_cast<int>(j % k);
        ++count[j % k];
      }
      // each training set (complement of one fold) keeps >= 2 of this class
      int total = static_cast<int>(idx.size());
      for (int f = 0; f < k; ++f)
        if (total - count[f] < 2) ok = false;
    }
    if (ok) return folds;
  }
  throw FoldDegenerate("make_folds: could not form folds leaving 2+ units of each class in every training set");
}

NuisanceFit crossfit(const TwoByTwoView& view, const LearnerSpec& spec) {
  return crossfit_with_folds(view, spec, make_folds(view.treat, spec.folds, spec.seed));
}

NuisanceFit crossfit_with_folds(const TwoByTwoView& view, const LearnerSpec& spec,
                                const std::vector<int>& folds) {
  const long n = view.delta_y.size();
  if (static_cast<long>(folds.size()) != n)
    throw InvalidArgument("crossfit_with_folds: fold vector length mismatch");
  int k = *std::max_element(folds.begin(), folds.end()) + 1;
  double lambda = spec.outcome == LearnerSpec::Outcome::kRidge ? spec.ridge_lambda : 0.0;

  NuisanceFit fit;
  fit.g0_hat.resize(n);
  fit.g1_hat.resize(n);
  fit.m_hat.resize(n);
  fit.folds = folds;
  fit.p_hat = view.treat.mean();
  fit.spec = spec;

  for (int f = 0; f < k; ++f) {
    std::vector<int> train, test, train0, train1;
    for (long i = 0; i < n; ++i) {
      if (folds[i] == f) {
        test.push_back(static_cast<int>(i));
      } else {
        train.push_back(static_cast<int>(i));
        if (view.treat[i] > 0.5)
          train1.push_back(static_cast<int>(i));
        else
          train0.push_back(static_cast<int>(i));
      }
    }
    if (test.empty()) continue;
    if (train0.size() < 2 || train1.size() < 2)
      throw FoldDegenerate("crossfit: training set lost a class");

    Eigen::MatrixXd x_test = gather_rows(view.xmat, test);

    LogitModel pm = fit_logistic(gather_rows(view.xmat, train), gather(view.treat, train));
    Eigen::VectorXd m_test = pm.predict(x_test);
    if (spec.calibrate) {
      Eigen::VectorXd train_scores = pm.predict(gather_rows(view.xmat, train));
      IsotonicMap map = isotonic_calibrate(train_scores, gather(view.treat, train));
      m_test = map.apply(m_test);
    }

    LinearModel g0 = fit_ols(gather_rows(view.xmat, train0), gather(view.delta_y, train0), lambda);
    LinearModel g1 = fit_ols(gather_rows(view.xmat, train1), gather(view.delta_y, train1), lambda);
    Eigen::VectorXd g0_test = g0.predict(x_test);
    Eigen::VectorXd g1_test = g1.predict(x_test);

    for (size_t r = 0; r < test.size(); ++r) {
      fit.m_hat[test[r]] = m_test[r];
      fit.g0_hat[test[r]] = g0_test[r];
      fit.g1_hat[test[r]] = g1_test[r];
    }
  }
  fit.m_hat = fit.m_hat.array().min(1.0 - kPropensityClip).max(kPropensityClip);
  return fit;
}

}  // namespace trendsense
