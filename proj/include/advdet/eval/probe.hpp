#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advdet/cluster/gmm.hpp"
#include "advdet/cluster/hungarian.hpp"
#include "advdet/cluster/kmeans.hpp"
#include "advdet/core/error.hpp"
#include "advdet/core/types.hpp"

namespace advdet::eval {

enum class ProbeTarget { kForgeryMethod, kIdentity };
enum class ClusterAlgorithm { kKMeans, kGaussianMixture };

inline std::string to_string(ProbeTarget t) { return t == ProbeTarget::kForgeryMethod ? "FORGERY_METHOD" : "IDENTITY"; }
inline std::string to_string(ClusterAlgorithm a) {
  return a == ClusterAlgorithm::kKMeans ? "KMEANS" : "GAUSSIAN_MIXTURE";
}

struct ClusterProbeReport {
  ProbeTarget probe_target = ProbeTarget::kForgeryMethod;
  ClusterAlgorithm algorithm = ClusterAlgorithm::kKMeans;
  double accuracy = 0.0;
  int k = 0;
  int n_samples = 0;

  nlohmann::json to_json() const {
    return {{"probe_target", to_string(probe_target)},
            {"algorithm", to_string(algorithm)},
            {"accuracy", accuracy},
            {"k", k},
            {"n_samples", n_samples}};
  }
};

/// Maps arbitrary label values to 0..n-1 in ascending order of value.
inline std::vector<int> dense_labels(std::span<const int> labels, int* n_distinct = nullptr) {
  std::map<int, int> ids;
  for (int l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [_, v] : ids) v = next++;
  if (n_distinct) *n_distinct = next;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids.at(l));
  return out;
}

/// Accuracy under the best one-to-one matching of cluster ids to labels.
inline double clustering_accuracy(std::span<const int> clusters, std::span<const int> labels) {
  if (clusters.size() != labels.size()) throw ContractViolation("clustering accuracy: length mismatch");
  if (clusters.empty()) throw MetricError("clustering accuracy of an empty set");
  int nc = 0, nl = 0;
  const auto c = dense_labels(clusters, &nc);
  const auto l = dense_labels(labels, &nl);
  const int n = std::max(nc, nl);
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < c.size(); ++i) table(c[i], l[i]) += 1.0;
  const auto match = cluster::max_weight_assignment(table);
  double hit = 0.0;
  for (int r = 0; r < n; ++r) hit += table(r, match[static_cast<std::size_t>(r)]);
  return hit / static_cast<double>(clusters.size());
}

/// Clusters features (10 restarts, fixed seed) and scores the partition against
/// the nuisance labels. Lower accuracy means less label information in the features.
inline ClusterProbeReport clustering_accuracy_probe(const FeatureMatrix& features, std::span<const int> target_labels,
                                                    ClusterAlgorithm algorithm, int k, std::int64_t seed,
                                                    ProbeTarget target = ProbeTarget::kForgeryMethod) {
  if (static_cast<std::size_t>(features.rows()) != target_labels.size()) {
    throw ContractViolation("probe: feature rows and labels differ in length");
  }
  if (k < 1) throw ClusteringError("probe k must be positive");
  if (k > features.rows()) {
    throw ClusteringError("probe k = " + std::to_string(k) + " exceeds sample count " + std::to_string(features.rows()));
  }
  int distinct = 0;
  dense_labels(target_labels, &distinct);
  if (distinct != k) {
    throw ContractViolation("probe k = " + std::to_string(k) + " but labels have " + std::to_string(distinct) +
                            " distinct values");
  }
  ClusterProbeReport rep{target, algorithm, 1.0, k, static_cast<int>(features.rows())};
  if (k == 1) return rep;
  if (cluster::count_distinct_rows(features) == 1) throw ClusteringError("probe features are all identical");
  std::vector<int> assignment;
  if (algorithm == ClusterAlgorithm::kKMeans) {
    assignment = cluster::kmeans(features, k, seed).labels;
  } else {
    assignment = cluster::gaussian_mixture(features, k, seed).labels;
  }
  rep.accuracy = clustering_accuracy(assignment, target_labels);
  return rep;
}

/// CSV with header sample_id,binary_label,method_label,identity_label,f0..f{D-1}.
/// ABSENT labels are empty fields.
inline void write_feature_csv(const std::filesystem::path& path, const FeatureBatch& batch) {
  batch.check();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write feature file " + path.string());
  out << "sample_id,binary_label,method_label,identity_label";
  for (Eigen::Index d = 0; d < batch.features.cols(); ++d) out << ",f" << d;
  out << '\n';
  auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
  char buf[32];
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out << batch.sample_ids[i] << ',' << to_string(batch.binary_labels[i]) << ',' << opt(batch.method_labels[i]) << ','
        << opt(batch.identity_labels[i]);
    for (Eigen::Index d = 0; d < batch.features.cols(); ++d) {
      std::snprintf(buf, sizeof buf, ",%.9g", batch.features(static_cast<Eigen::Index>(i), d));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace advdet::eval
