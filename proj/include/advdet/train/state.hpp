#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "advdet/autodiff/losses.hpp"
#include "advdet/core/error.hpp"
#include "advdet/core/rng.hpp"
#include "advdet/core/types.hpp"

namespace advdet::train {

struct TrainState {
  std::int64_t iteration = 0;  // optimizer steps taken
  RampState ramp;
  double best_val_metric = -std::numeric_limits<double>::infinity();
  int checks_since_improvement = 0;
  int n_checks = 0;
  Rng rng;  // batch sampling stream
};

struct StepMetrics {
  std::int64_t iteration = 0;
  double l_cls = 0, l_f = 0, l_id = 0, l_tol = 0;
  double lambda = 0, lr = 0;

  nlohmann::json to_json() const {
    return {{"iteration", iteration}, {"l_cls", l_cls}, {"l_f", l_f},       {"l_id", l_id},
            {"l_tol", l_tol},         {"lambda", lambda}, {"lr", lr}};
  }
};

/// base_lr * (1 - i / T), never below base_lr * 1e-3.
inline double learning_rate(std::int64_t iteration, std::int64_t total_iters, double base_lr) {
  if (total_iters <= 0) throw ConfigError("total_iters must be positive");
  if (iteration < 0 || iteration > total_iters) {
    throw ContractViolation("learning_rate: iteration " + std::to_string(iteration) + " outside [0, " +
                            std::to_string(total_iters) + "]");
  }
  const double frac = 1.0 - static_cast<double>(iteration) / static_cast<double>(total_iters);
  return base_lr * std::max(frac, 1e-3);
}

/// `k` distinct indices drawn uniformly from [0, n) by a partial Fisher-Yates shuffle.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw ContractViolation("cannot draw " + std::to_string(k) + " of " + std::to_string(n));
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

/// batch_size/2 REAL and batch_size/2 FAKE TRAIN records (indices into `records`),
/// reals first. Each half is uniform without replacement.
inline std::vector<std::size_t> sample_balanced_batch(std::span<const SampleRecord> records, int batch_size, Rng& rng) {
  if (batch_size <= 0 || batch_size % 2 != 0) throw ConfigError("batch_size must be a positive even number");
  std::vector<std::size_t> real, fake;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split != Split::kTrain) continue;
    (records[i].is_fake() ? fake : real).push_back(i);
  }
  const auto half = static_cast<std::size_t>(batch_size / 2);
  if (real.size() < half || fake.size() < half) {
    throw DataError("balanced batch of " + std::to_string(batch_size) + " needs " + std::to_string(half) +
                    " REAL and FAKE TRAIN records, found " + std::to_string(real.size()) + " REAL and " +
                    std::to_string(fake.size()) + " FAKE");
  }
  std::vector<std::size_t> batch;
  batch.reserve(2 * half);
  for (std::size_t i : sample_without_replacement(real.size(), half, rng)) batch.push_back(real[i]);
  for (std::size_t i : sample_without_replacement(fake.size(), half, rng)) batch.push_back(fake[i]);
  return batch;
}

/// Patience counter on a maximized metric; `patience` 0 never stops.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  /// Records one check; true when training should stop.
  bool update(TrainState& s, double metric) const {
    ++s.n_checks;
    if (metric > s.best_val_metric + min_delta_) {
      s.best_val_metric = metric;
      s.checks_since_improvement = 0;
    } else {
      ++s.checks_since_improvement;
    }
    return patience_ > 0 && s.checks_since_improvement >= patience_;
  }

  int patience() const { return patience_; }

 private:
  int patience_;
  double min_delta_;
};

/// Iterations between validation checks: one epoch is ceil(train_frames / batch).
inline std::int64_t check_interval(std::size_t train_frames, int batch_size, int checks_per_epoch) {
  const auto epoch = static_cast<std::int64_t>((train_frames + static_cast<std::size_t>(batch_size) - 1) /
                                               static_cast<std::size_t>(batch_size));
  return std::max<std::int64_t>(1, std::llround(static_cast<double>(epoch) / checks_per_epoch));
}

}  // namespace advdet::train
