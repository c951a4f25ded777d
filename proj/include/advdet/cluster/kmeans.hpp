#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "advdet/core/error.hpp"
#include "advdet/core/rng.hpp"
#include "advdet/core/types.hpp"

namespace advdet::cluster {

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 300;
};

struct KMeansResult {
  std::vector<int> labels;
  FeatureMatrix centroids;
  double inertia = 0.0;
};

/// Number of distinct rows (exact comparison).
inline std::size_t count_distinct_rows(const FeatureMatrix& x) {
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) rows.emplace_back(x.row(i).data(), x.row(i).data() + x.cols());
  std::sort(rows.begin(), rows.end());
  return static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

namespace detail {

inline int nearest(const FeatureMatrix& c, const Eigen::Ref<const Eigen::RowVectorXd>& x, double* dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < c.rows(); ++j) {
    const double d = (c.row(j) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

/// k-means++ seeding.
inline FeatureMatrix seed_plus_plus(const FeatureMatrix& x, int k, Rng& rng) {
  const Eigen::Index m = x.rows();
  FeatureMatrix c(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
  c.row(0) = x.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) d2[static_cast<std::size_t>(i)] = (x.row(i) - c.row(0)).squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (double d : d2) total += d;
    Eigen::Index chosen = m - 1;
    if (total > 0) {
      double target = unit(rng) * total;
      for (Eigen::Index i = 0; i < m; ++i) {
        target -= d2[static_cast<std::size_t>(i)];
        if (target <= 0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    c.row(j) = x.row(chosen);
    for (Eigen::Index i = 0; i < m; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], (x.row(i) - c.row(j)).squaredNorm());
    }
  }
  return c;
}

inline KMeansResult lloyd(const FeatureMatrix& x, FeatureMatrix c, int max_iter) {
  const Eigen::Index m = x.rows();
  const int k = static_cast<int>(c.rows());
  std::vector<int> labels(static_cast<std::size_t>(m), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    std::vector<double> dist(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
      const int l = nearest(c, x.row(i), &dist[static_cast<std::size_t>(i)]);
      if (l != labels[static_cast<std::size_t>(i)]) {
        labels[static_cast<std::size_t>(i)] = l;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    FeatureMatrix sums = FeatureMatrix::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < m; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        c.row(j) = sums.row(j) / counts[static_cast<std::size_t>(j)];
        continue;
      }
      // Empty cluster: move it to the point farthest from its centroid.
      const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
      c.row(j) = x.row(far);
      dist[static_cast<std::size_t>(far)] = 0.0;
      labels[static_cast<std::size_t>(far)] = j;
    }
  }
  KMeansResult r;
  r.inertia = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double d = 0.0;
    labels[static_cast<std::size_t>(i)] = nearest(c, x.row(i), &d);
    r.inertia += d;
  }
  r.labels = std::move(labels);
  r.centroids = std::move(c);
  return r;
}

}  // namespace detail

/// k-means with k-means++ seeding; keeps the restart with the lowest inertia.
inline KMeansResult kmeans(const FeatureMatrix& x, int k, std::int64_t seed, const KMeansOptions& opt = {}) {
  if (k < 1) throw ClusteringError("k must be positive");
  if (k > x.rows()) throw ClusteringError("k = " + std::to_string(k) + " exceeds sample count " + std::to_string(x.rows()));
  if (!x.allFinite()) throw ClusteringError("non-finite input features");
  if (count_distinct_rows(x) < static_cast<std::size_t>(k)) {
    throw ClusteringError("fewer distinct points than k = " + std::to_string(k));
  }
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    Rng rng = make_rng(seed, "kmeans/restart/" + std::to_string(r));
    auto res = detail::lloyd(x, detail::seed_plus_plus(x, k, rng), opt.max_iter);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

}  // namespace advdet::cluster
