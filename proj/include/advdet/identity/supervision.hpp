#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advdet/cluster/kmeans.hpp"
#include "advdet/core/error.hpp"
#include "advdet/core/rng.hpp"
#include "advdet/core/types.hpp"
#include "advdet/identity/embedding.hpp"

namespace advdet::identity {

/// a.b / (|a| |b|), clamped to [-1, 1] against rounding.
inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ContractViolation("cosine similarity: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na <= 0 || nb <= 0) throw EmbeddingError(ExitCode::kRuntime, "zero-norm embedding in cosine similarity");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Pairwise similarities I_mn and labels Y_mn = [I_mn > tau], pairs (m, n) with
/// m < n in lexicographic order.
struct SimilaritySupervision {
  std::vector<double> similarities;
  std::vector<int> labels;
  double tau = 0.07;
};

inline int threshold_label(double similarity, double tau) { return similarity > tau ? 1 : 0; }

inline SimilaritySupervision similarity_supervision_from(std::span<const Embedding> embeddings, double tau) {
  const std::size_t m = embeddings.size();
  if (m < 2) throw ContractViolation("similarity supervision needs a batch of at least 2");
  SimilaritySupervision s;
  s.tau = tau;
  s.similarities.reserve(m * (m - 1) / 2);
  s.labels.reserve(m * (m - 1) / 2);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const double sim = cosine_similarity(embeddings[a], embeddings[b]);
      s.similarities.push_back(sim);
      s.labels.push_back(threshold_label(sim, tau));
    }
  }
  return s;
}

inline SimilaritySupervision build_similarity_supervision(std::span<const SampleRecord> batch, EmbeddingOracle& oracle,
                                                          double tau) {
  if (batch.size() < 2) throw ContractViolation("similarity supervision needs a batch of at least 2");
  std::vector<Embedding> emb;
  emb.reserve(batch.size());
  for (const auto& r : batch) emb.push_back(oracle.embed(r));
  return similarity_supervision_from(emb, tau);
}

// ---------------------------------------------------------------------------
// Threshold calibration

struct CalibrationOptions {
  int n_batches = 100;
  int batch_size = 64;
  std::pair<double, double> quantile_band{0.60, 0.85};
  double grid_step = 0.01;
  int curve_points = 101;
  std::int64_t seed = 0;
};

struct CalibrationReport {
  std::pair<double, double> candidate_range{0, 0};
  std::vector<double> grid;
  std::vector<std::pair<double, double>> cumulative_curve;  // (similarity, cumulative probability)
  std::size_t n_pairs = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["candidate_range"] = {candidate_range.first, candidate_range.second};
    j["grid"] = grid;
    j["n_pairs"] = n_pairs;
    nlohmann::json curve = nlohmann::json::array();
    for (auto [s, p] : cumulative_curve) curve.push_back({s, p});
    j["cumulative_curve"] = curve;
    return j;
  }
};

/// Inverse empirical CDF: smallest sample s with F(s) >= p.
inline double empirical_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw CalibrationError("quantile of an empty sample");
  const double n = static_cast<double>(sorted.size());
  auto idx = static_cast<std::ptrdiff_t>(std::ceil(p * n)) - 1;
  idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(sorted.size()) - 1);
  return sorted[static_cast<std::size_t>(idx)];
}

/// Candidate grid: multiples of `step` inside [lo, hi]; the midpoint if none fit.
inline std::vector<double> tau_grid(double lo, double hi, double step) {
  if (!(step > 0)) throw ConfigError("grid_step must be positive");
  std::vector<double> grid;
  const auto first = static_cast<long long>(std::ceil(lo / step - 1e-9));
  const auto last = static_cast<long long>(std::floor(hi / step + 1e-9));
  for (long long k = first; k <= last; ++k) grid.push_back(static_cast<double>(k) * step);
  if (grid.empty()) grid.push_back(0.5 * (lo + hi));
  return grid;
}

/// Summarizes the distribution of within-batch pairwise similarities over
/// randomly drawn TRAIN batches; the final threshold is picked by a validation sweep.
inline CalibrationReport calibrate_tau(std::span<const SampleRecord> records, EmbeddingOracle& oracle,
                                       const CalibrationOptions& opt = {}) {
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == Split::kTrain) train.push_back(i);
  }
  if (opt.batch_size < 2) throw ConfigError("calibration batch_size must be at least 2");
  if (opt.n_batches < 1) throw ConfigError("calibration n_batches must be positive");
  const auto [q_lo, q_hi] = opt.quantile_band;
  if (!(q_lo >= 0 && q_hi <= 1 && q_lo <= q_hi)) throw ConfigError("quantile band must satisfy 0 <= lo <= hi <= 1");
  if (train.size() < static_cast<std::size_t>(opt.batch_size)) {
    throw DataError("calibration needs at least " + std::to_string(opt.batch_size) + " TRAIN records, found " +
                    std::to_string(train.size()));
  }

  std::unordered_map<std::size_t, Embedding> cache;
  auto embedding_of = [&](std::size_t i) -> const Embedding& {
    auto it = cache.find(i);
    if (it == cache.end()) it = cache.emplace(i, oracle.embed(records[i])).first;
    return it->second;
  };

  Rng rng = make_rng(opt.seed, "calibrate_tau/batches");
  std::vector<double> sims;
  sims.reserve(static_cast<std::size_t>(opt.n_batches) * opt.batch_size * (opt.batch_size - 1) / 2);
  std::vector<std::size_t> pool = train;
  std::vector<Embedding> batch(static_cast<std::size_t>(opt.batch_size));
  for (int b = 0; b < opt.n_batches; ++b) {
    // partial Fisher-Yates: uniform without replacement
    for (int i = 0; i < opt.batch_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
      batch[static_cast<std::size_t>(i)] = embedding_of(pool[static_cast<std::size_t>(i)]);
    }
    for (std::size_t a = 0; a < batch.size(); ++a) {
      for (std::size_t c = a + 1; c < batch.size(); ++c) sims.push_back(cosine_similarity(batch[a], batch[c]));
    }
  }
  std::sort(sims.begin(), sims.end());
  if (sims.front() == sims.back()) throw CalibrationError("all sampled similarities are equal");

  CalibrationReport rep;
  rep.n_pairs = sims.size();
  rep.candidate_range = {empirical_quantile(sims, q_lo), empirical_quantile(sims, q_hi)};
  rep.grid = tau_grid(rep.candidate_range.first, rep.candidate_range.second, opt.grid_step);
  const int points = std::max(2, opt.curve_points);
  for (int i = 0; i < points; ++i) {
    const double p = static_cast<double>(i) / (points - 1);
    rep.cumulative_curve.emplace_back(empirical_quantile(sims, p), p);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Pseudo identity labels

/// K-means over recognition embeddings; one cluster id per record.
inline std::vector<int> derive_pseudo_identity_labels(std::span<const SampleRecord> records, EmbeddingOracle& oracle,
                                                      int k, std::int64_t seed) {
  if (k < 1) throw ConfigError("pseudo-label cluster count must be positive");
  if (records.empty()) throw DataError("no records to pseudo-label");
  if (k == 1) return std::vector<int>(records.size(), 0);
  FeatureMatrix x(static_cast<Eigen::Index>(records.size()), kEmbeddingDim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Embedding e = oracle.embed(records[i]);
    for (int d = 0; d < kEmbeddingDim; ++d) x(static_cast<Eigen::Index>(i), d) = e[static_cast<std::size_t>(d)];
  }
  if (cluster::count_distinct_rows(x) < static_cast<std::size_t>(k)) {
    throw ClusteringError("fewer distinct embeddings than k = " + std::to_string(k));
  }
  return cluster::kmeans(x, k, static_cast<std::int64_t>(derive_seed(seed, "pseudo_labels"))).labels;
}

}  // namespace advdet::identity
