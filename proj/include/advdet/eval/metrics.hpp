#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advdet/core/error.hpp"

namespace advdet::eval {

/// Mann-Whitney AUC: P(score of a random positive > score of a random negative),
/// ties count one half. Computed from mid-ranks in O(M log M).
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractViolation("roc_auc: scores and labels differ in length");
  const std::size_t m = scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank of the tie block
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == 1) {
        pos_rank_sum += mid_rank;
        ++n_pos;
      } else if (labels[order[t]] != 0) {
        throw ContractViolation("roc_auc: labels must be 0 or 1");
      }
    }
    i = j + 1;
  }
  const std::size_t n_neg = m - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("roc_auc needs both classes present");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

/// Fraction of samples with (score >= threshold) == label.
inline double accuracy_at(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  if (scores.size() != labels.size()) throw ContractViolation("accuracy: scores and labels differ in length");
  if (scores.empty()) throw MetricError("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) correct += ((scores[i] >= threshold ? 1 : 0) == labels[i]);
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

struct FrameScore {
  std::string video_id;
  double score = 0.0;  // fake probability
};

struct VideoScore {
  std::string video_id;
  double score = 0.0;
  int frames_used = 0;
};

/// Mean of the first min(available, cap) frame scores per video, videos in order
/// of first appearance. When `known_videos` is non-empty, other ids are rejected.
inline std::vector<VideoScore> video_level_scores(std::span<const FrameScore> frames, int max_frames_per_video = 110,
                                                  const std::unordered_set<std::string>& known_videos = {}) {
  if (max_frames_per_video <= 0) throw ConfigError("max_frames_per_video must be positive");
  std::vector<VideoScore> out;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<double> sums;
  for (const auto& f : frames) {
    if (!known_videos.empty() && !known_videos.contains(f.video_id)) {
      throw DataError("frame score for unknown video '" + f.video_id + "'");
    }
    if (!(f.score >= 0.0 && f.score <= 1.0)) throw ContractViolation("frame score outside [0, 1]");
    auto [it, inserted] = slot.try_emplace(f.video_id, out.size());
    if (inserted) {
      out.push_back({f.video_id, 0.0, 0});
      sums.push_back(0.0);
    }
    auto& v = out[it->second];
    if (v.frames_used >= max_frames_per_video) continue;
    sums[it->second] += f.score;
    ++v.frames_used;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].score = sums[i] / out[i].frames_used;
  return out;
}

struct EvalReport {
  double frame_auc = 0, frame_acc = 0, video_auc = 0, video_acc = 0;
  int n_frames = 0, n_videos = 0;

  nlohmann::json to_json() const {
    return {{"frame_auc", frame_auc}, {"frame_acc", frame_acc}, {"video_auc", video_auc},
            {"video_acc", video_acc}, {"n_frames", n_frames},   {"n_videos", n_videos}};
  }
};

struct LabeledFrame {
  std::string video_id;
  int label = 0;  // 1 = FAKE
  double score = 0.0;
};

/// Frame- and video-level AUC/ACC at threshold 0.5.
inline EvalReport evaluate_frames(std::span<const LabeledFrame> frames, int max_frames_per_video = 110) {
  if (frames.empty()) throw DataError("no frames to evaluate");
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<FrameScore> fs;
  std::unordered_map<std::string, int> video_label;
  for (const auto& f : frames) {
    scores.push_back(f.score);
    labels.push_back(f.label);
    fs.push_back({f.video_id, f.score});
    video_label.emplace(f.video_id, f.label);
  }
  EvalReport rep;
  rep.n_frames = static_cast<int>(frames.size());
  rep.frame_auc = roc_auc(scores, labels);
  rep.frame_acc = accuracy_at(scores, labels);
  const auto videos = video_level_scores(fs, max_frames_per_video);
  std::vector<double> vs;
  std::vector<int> vl;
  for (const auto& v : videos) {
    vs.push_back(v.score);
    vl.push_back(video_label.at(v.video_id));
  }
  rep.n_videos = static_cast<int>(videos.size());
  rep.video_auc = roc_auc(vs, vl);
  rep.video_acc = accuracy_at(vs, vl);
  return rep;
}

}  // namespace advdet::eval
