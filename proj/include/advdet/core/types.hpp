#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "advdet/core/error.hpp"

namespace advdet {

enum class BinaryLabel { kReal, kFake };
enum class Split { kTrain, kVal, kTest };

inline std::string upper(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

inline std::string to_string(BinaryLabel label) { return label == BinaryLabel::kReal ? "REAL" : "FAKE"; }

inline std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "TRAIN";
    case Split::kVal: return "VAL";
    case Split::kTest: return "TEST";
  }
  return "?";
}

inline BinaryLabel parse_binary_label(std::string_view text) {
  const auto u = upper(text);
  if (u == "REAL") return BinaryLabel::kReal;
  if (u == "FAKE") return BinaryLabel::kFake;
  throw DataError("unknown binary_label '" + std::string(text) + "'");
}

inline Split parse_split(std::string_view text) {
  const auto u = upper(text);
  if (u == "TRAIN") return Split::kTrain;
  if (u == "VAL") return Split::kVal;
  if (u == "TEST") return Split::kTest;
  throw DataError("unknown split '" + std::string(text) + "'");
}

/// Face box in pixels: top-left corner plus extent.
struct FaceBox {
  double x = 0, y = 0, w = 0, h = 0;
  bool operator==(const FaceBox&) const = default;
};

/// One frame of the dataset.
struct SampleRecord {
  std::string image_path;
  BinaryLabel binary_label = BinaryLabel::kReal;
  std::optional<int> method_label;    // absent for REAL
  std::optional<int> identity_label;
  std::string video_id;
  Split split = Split::kTrain;
  std::optional<FaceBox> face_box;

  bool is_fake() const { return binary_label == BinaryLabel::kFake; }
  bool operator==(const SampleRecord&) const = default;
};

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Generator outputs for a batch plus the labels every loss head needs.
struct FeatureBatch {
  FeatureMatrix features;  // [M x feature_dim]
  std::vector<BinaryLabel> binary_labels;
  std::vector<std::optional<int>> method_labels;
  std::vector<std::optional<int>> identity_labels;
  std::vector<std::string> sample_ids;

  std::size_t size() const { return sample_ids.size(); }

  /// Throws ShapeError / NumericalError when the batch invariants do not hold.
  void check() const {
    const auto m = static_cast<Eigen::Index>(sample_ids.size());
    if (features.rows() != m || static_cast<Eigen::Index>(binary_labels.size()) != m ||
        static_cast<Eigen::Index>(method_labels.size()) != m ||
        static_cast<Eigen::Index>(identity_labels.size()) != m) {
      throw ShapeError("feature batch arrays disagree on length");
    }
    if (!features.allFinite()) throw NumericalError("feature batch contains non-finite values");
  }
};

}  // namespace advdet
