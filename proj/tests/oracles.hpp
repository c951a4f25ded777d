#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <span>
#include <vector>

namespace advdet::tu {

/// AUC by comparing every positive with every negative.
inline double pairwise_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
      pairs += 1;
    }
  }
  return wins / pairs;
}

/// Best accuracy over every injective relabeling of clusters, by enumerating permutations.
inline double brute_force_clustering_accuracy(std::span<const int> clusters, std::span<const int> labels) {
  std::map<int, int> cid, lid;
  for (int c : clusters) cid.emplace(c, static_cast<int>(cid.size()));
  for (int l : labels) lid.emplace(l, static_cast<int>(lid.size()));
  const int n = static_cast<int>(std::max(cid.size(), lid.size()));
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  int best = 0;
  do {
    int hit = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i) hit += perm[cid.at(clusters[i])] == lid.at(labels[i]);
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(clusters.size());
}

}  // namespace advdet::tu
