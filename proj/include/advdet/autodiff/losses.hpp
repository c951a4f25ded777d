#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advdet/autodiff/graph.hpp"
#include "advdet/core/config.hpp"
#include "advdet/core/error.hpp"

namespace advdet {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;

// ---------------------------------------------------------------------------
// Adversarial ramp

struct RampState {
  std::int64_t current_iters = 0;
  std::int64_t total_iters = 1;
  double gamma = 10.0;

  double progress() const { return static_cast<double>(current_iters) / static_cast<double>(total_iters); }
};

/// lambda = 2 / (1 + exp(-gamma * p)) - 1 with p = current / total; lies in [0, 1).
inline double ramp_lambda(const RampState& s) {
  if (s.total_iters <= 0) throw ConfigError("ramp: total_iters must be positive");
  if (s.current_iters < 0 || s.current_iters > s.total_iters) {
    throw ContractViolation("ramp: current_iters " + std::to_string(s.current_iters) + " outside [0, " +
                            std::to_string(s.total_iters) + "]");
  }
  if (!(s.gamma > 0)) throw ConfigError("ramp: gamma must be positive");
  // 2/(1+e^{-x}) - 1 == tanh(x/2), which keeps full precision near zero.
  return std::tanh(0.5 * s.gamma * s.progress());
}

// ---------------------------------------------------------------------------
// Scalar loss definitions

/// Mean over rows of -log softmax(logits)[label]. Empty input yields 0.
template <class Derived>
double softmax_cross_entropy(const Eigen::MatrixBase<Derived>& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw ContractViolation("cross entropy: " + std::to_string(logits.rows()) + " rows but " +
                            std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) {
      throw ContractViolation("cross entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(logits.cols()) + ")");
    }
    const auto row = logits.row(i).template cast<double>();
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(y);
  }
  return total / static_cast<double>(labels.size());
}

/// Forgery-method adversarial loss over fake samples only. F = 0 gives the zero sentinel.
template <class Derived>
double forgery_adversarial_loss(const Eigen::MatrixBase<Derived>& logits, std::span<const int> method_labels) {
  return softmax_cross_entropy(logits, method_labels);
}

/// Hard-label identity adversarial loss over every sample of the batch.
template <class Derived>
double identity_hard_label_loss(const Eigen::MatrixBase<Derived>& logits,
                                std::span<const std::optional<int>> identity_labels,
                                std::span<const std::string> sample_ids = {}) {
  std::vector<int> labels;
  labels.reserve(identity_labels.size());
  for (std::size_t i = 0; i < identity_labels.size(); ++i) {
    if (!identity_labels[i]) {
      const std::string who = i < sample_ids.size() ? sample_ids[i] : "#" + std::to_string(i);
      throw DataError("sample '" + who + "' has no identity label (HARD_LABEL mode)");
    }
    labels.push_back(*identity_labels[i]);
  }
  return softmax_cross_entropy(logits, labels);
}

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

/// -[y a (1-p)^b log p + (1-y)(1-a) p^b log(1-p)]
inline double focal_loss(int y, double y_hat, double alpha, double beta) {
  const double p = clamp_prob(y_hat);
  if (y == 1) return -alpha * std::pow(1.0 - p, beta) * std::log(p);
  if (y == 0) return -(1.0 - alpha) * std::pow(p, beta) * std::log(1.0 - p);
  throw ContractViolation("focal loss: label must be 0 or 1");
}

/// Sum of focal terms over all pairs.
inline double identity_similarity_loss(std::span<const double> pair_predictions, std::span<const int> pair_labels,
                                       double alpha, double beta) {
  if (pair_predictions.size() != pair_labels.size()) {
    throw ContractViolation("identity similarity loss: " + std::to_string(pair_predictions.size()) +
                            " predictions but " + std::to_string(pair_labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < pair_labels.size(); ++k) total += focal_loss(pair_labels[k], pair_predictions[k], alpha, beta);
  return total;
}

/// l_cls + lambda1 * l_f + lambda2 * l_id, dropping disabled terms.
inline double total_loss(double l_cls, double l_f, double l_id, const AdversarialConfig& cfg) {
  double total = l_cls;
  if (cfg.forgery_mode == ForgeryMode::kOn) total += cfg.lambda1 * l_f;
  if (cfg.identity_mode != IdentityMode::kOff) total += cfg.lambda2 * l_id;
  return total;
}

// ---------------------------------------------------------------------------
// Graph nodes for the same losses

namespace ad {

/// Mean softmax cross-entropy as a scalar node.
template <class T>
Var cross_entropy(Graph<T>& g, Var logits, std::span<const int> labels) {
  const auto& z = g.value(logits);
  const double loss = softmax_cross_entropy(z, labels);
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  return g.op(Matrix<T>::Constant(1, 1, static_cast<T>(loss)), TensorShape::flat(1, 1), {logits},
              [logits, lab](Graph<T>& gr, const Matrix<T>& dy) {
                const auto& zz = gr.value(logits);
                if (lab->empty()) return;
                Matrix<T> d(zz.rows(), zz.cols());
                const T scale = dy(0, 0) / static_cast<T>(lab->size());
                for (Eigen::Index i = 0; i < zz.rows(); ++i) {
                  const T mx = zz.row(i).maxCoeff();
                  auto e = (zz.row(i).array() - mx).exp();
                  d.row(i) = (e / e.sum()).matrix();
                  d(i, (*lab)[static_cast<std::size_t>(i)]) -= T(1);
                }
                gr.accumulate(logits, scale * d);
              });
}

/// Focal loss over a column of probabilities; summed, or averaged when `normalize`.
template <class T>
Var focal_pair_loss(Graph<T>& g, Var probs, std::span<const int> labels, double alpha, double beta, bool normalize) {
  const auto& p = g.value(probs);
  if (p.cols() != 1 || static_cast<std::size_t>(p.rows()) != labels.size()) {
    throw ContractViolation("focal pair loss: " + std::to_string(p.rows()) + " predictions but " +
                            std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < p.rows(); ++k) total += focal_loss(labels[static_cast<std::size_t>(k)], p(k, 0), alpha, beta);
  const double denom = normalize && !labels.empty() ? static_cast<double>(labels.size()) : 1.0;
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  return g.op(Matrix<T>::Constant(1, 1, static_cast<T>(total / denom)), TensorShape::flat(1, 1), {probs},
              [probs, lab, alpha, beta, denom](Graph<T>& gr, const Matrix<T>& dy) {
                const auto& pv = gr.value(probs);
                Matrix<T> d(pv.rows(), 1);
                for (Eigen::Index k = 0; k < pv.rows(); ++k) {
                  const double raw = static_cast<double>(pv(k, 0));
                  if (raw < kProbClamp || raw > 1.0 - kProbClamp) {
                    d(k, 0) = T(0);  // clamped region is flat
                    continue;
                  }
                  double grad;
                  if ((*lab)[static_cast<std::size_t>(k)] == 1) {
                    const double q = 1.0 - raw;
                    const double qb1 = beta == 0.0 ? 0.0 : beta * std::pow(q, beta - 1.0);
                    grad = -alpha * (-qb1 * std::log(raw) + std::pow(q, beta) / raw);
                  } else {
                    const double pb1 = beta == 0.0 ? 0.0 : beta * std::pow(raw, beta - 1.0);
                    grad = -(1.0 - alpha) * (pb1 * std::log(1.0 - raw) - std::pow(raw, beta) / (1.0 - raw));
                  }
                  d(k, 0) = static_cast<T>(grad / denom);
                }
                gr.accumulate(probs, dy(0, 0) * d);
              });
}

}  // namespace ad
}  // namespace advdet
