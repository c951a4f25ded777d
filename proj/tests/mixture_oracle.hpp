#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "advdet/identity/supervision.hpp"

namespace advdet::tu {

/// Identities on orthogonal axes; each image adds noise of norm 1/3, so
/// same-identity cosine is about 0.9 and cross-identity cosine about 0.
class MixtureOracle final : public identity::EmbeddingOracle {
 public:
  explicit MixtureOracle(std::int64_t seed) : seed_(seed) {}
  identity::ProviderId provider() const override { return identity::ProviderId::kSyntheticFactor; }
  identity::Embedding embed(const SampleRecord& r) override {
    Rng rng = make_rng(seed_, "mixture/" + r.image_path);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> noise(identity::kEmbeddingDim);
    double ss = 0;
    for (auto& v : noise) {
      v = n(rng);
      ss += v * v;
    }
    identity::Embedding e(identity::kEmbeddingDim, 0.0f);
    e[static_cast<std::size_t>(*r.identity_label)] = 1.0f;
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += static_cast<float>(noise[i] / (3.0 * std::sqrt(ss)));
    return e;
  }

 private:
  std::int64_t seed_;
};

/// `n` TRAIN records cycling through `identities` identities.
inline std::vector<SampleRecord> mixture_records(int n, int identities) {
  std::vector<SampleRecord> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[i].image_path = "img" + std::to_string(i);
    out[i].video_id = "v" + std::to_string(i);
    out[i].identity_label = i % identities;
  }
  return out;
}

/// True when the candidate range spans from the cross-identity mode to the
/// same-identity mode. Modes are read off exact pair similarities of `records`.
inline bool brackets_gap(const std::pair<double, double>& range, const std::vector<SampleRecord>& records,
                         identity::EmbeddingOracle& oracle) {
  std::vector<identity::Embedding> e;
  for (const auto& r : records) e.push_back(oracle.embed(r));
  double max_cross = -1, min_same = 2;
  for (std::size_t a = 0; a < e.size(); ++a) {
    for (std::size_t b = a + 1; b < e.size(); ++b) {
      const double s = identity::cosine_similarity(e[a], e[b]);
      if (records[a].identity_label == records[b].identity_label) {
        min_same = std::min(min_same, s);
      } else {
        max_cross = std::max(max_cross, s);
      }
    }
  }
  return max_cross < min_same && range.first <= max_cross && range.second >= min_same;
}

}  // namespace advdet::tu
