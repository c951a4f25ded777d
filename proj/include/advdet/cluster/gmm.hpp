#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "advdet/cluster/kmeans.hpp"
#include "advdet/core/error.hpp"
#include "advdet/core/types.hpp"

namespace advdet::cluster {

struct GmmOptions {
  int restarts = 10;
  int max_iter = 200;
  double tol = 1e-6;        // on mean log-likelihood
  double reg_covar = 1e-6;  // added to every variance
};

struct GmmResult {
  std::vector<int> labels;
  FeatureMatrix means;
  FeatureMatrix variances;  // diagonal covariances, one row per component
  std::vector<double> weights;
  double log_likelihood = -std::numeric_limits<double>::infinity();  // mean per sample
};

namespace detail {

inline GmmResult fit_gmm_once(const FeatureMatrix& x, std::vector<int> init_labels, int k, const GmmOptions& opt) {
  const Eigen::Index m = x.rows(), d = x.cols();
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(m, k);
  for (Eigen::Index i = 0; i < m; ++i) resp(i, init_labels[static_cast<std::size_t>(i)]) = 1.0;

  GmmResult g;
  g.means.resize(k, d);
  g.variances.resize(k, d);
  g.weights.assign(static_cast<std::size_t>(k), 1.0 / k);
  double prev = -std::numeric_limits<double>::infinity();
  const double log2pi = std::log(2.0 * std::numbers::pi);

  Eigen::MatrixXd logp(m, k);
  for (int iter = 0; iter <= opt.max_iter; ++iter) {
    // M step
    for (int j = 0; j < k; ++j) {
      const double nk = resp.col(j).sum() + 10 * std::numeric_limits<double>::epsilon();
      g.weights[static_cast<std::size_t>(j)] = nk / static_cast<double>(m);
      Eigen::RowVectorXd mu = (resp.col(j).transpose() * x) / nk;
      Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(d);
      for (Eigen::Index i = 0; i < m; ++i) var += resp(i, j) * (x.row(i) - mu).array().square().matrix();
      g.means.row(j) = mu;
      g.variances.row(j) = (var / nk).array() + opt.reg_covar;
    }
    // E step
    for (int j = 0; j < k; ++j) {
      const double log_det = g.variances.row(j).array().log().sum();
      const double base = std::log(g.weights[static_cast<std::size_t>(j)]) - 0.5 * (d * log2pi + log_det);
      for (Eigen::Index i = 0; i < m; ++i) {
        logp(i, j) = base - 0.5 * ((x.row(i) - g.means.row(j)).array().square() / g.variances.row(j).array()).sum();
      }
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double mx = logp.row(i).maxCoeff();
      const double lse = mx + std::log((logp.row(i).array() - mx).exp().sum());
      ll += lse;
      resp.row(i) = (logp.row(i).array() - lse).exp();
    }
    ll /= static_cast<double>(m);
    g.log_likelihood = ll;
    if (std::abs(ll - prev) < opt.tol) break;
    prev = ll;
  }
  g.labels.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index arg = 0;
    resp.row(i).maxCoeff(&arg);
    g.labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return g;
}

}  // namespace detail

/// Diagonal-covariance Gaussian mixture fitted by EM. Each restart starts from a
/// single-restart k-means partition; the restart with the best likelihood wins.
inline GmmResult gaussian_mixture(const FeatureMatrix& x, int k, std::int64_t seed, const GmmOptions& opt = {}) {
  if (k < 1) throw ClusteringError("k must be positive");
  if (k > x.rows()) throw ClusteringError("k = " + std::to_string(k) + " exceeds sample count " + std::to_string(x.rows()));
  if (count_distinct_rows(x) < static_cast<std::size_t>(k)) {
    throw ClusteringError("fewer distinct points than k = " + std::to_string(k));
  }
  GmmResult best;
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    const auto init = kmeans(x, k, static_cast<std::int64_t>(derive_seed(seed, "gmm/restart/" + std::to_string(r))),
                             KMeansOptions{1, 300});
    auto g = detail::fit_gmm_once(x, init.labels, k, opt);
    if (g.log_likelihood > best.log_likelihood) best = std::move(g);
  }
  return best;
}

}  // namespace advdet::cluster
