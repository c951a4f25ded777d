#pragma once

#include <string>

#include <json.hpp>

#include "advdet/core/error.hpp"
#include "advdet/core/types.hpp"

namespace advdet {

/// One manifest line. ABSENT labels are written as null.
inline nlohmann::json record_to_json(const SampleRecord& r) {
  nlohmann::json j;
  j["image_path"] = r.image_path;
  j["binary_label"] = to_string(r.binary_label);
  j["method_label"] = r.method_label ? nlohmann::json(*r.method_label) : nlohmann::json(nullptr);
  j["identity_label"] = r.identity_label ? nlohmann::json(*r.identity_label) : nlohmann::json(nullptr);
  j["video_id"] = r.video_id;
  j["split"] = to_string(r.split);
  if (r.face_box) j["face_box"] = {r.face_box->x, r.face_box->y, r.face_box->w, r.face_box->h};
  return j;
}

namespace detail {

inline std::optional<int> optional_label(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw DataError(std::string("missing key '") + key + "'");
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number_integer()) throw DataError(std::string("'") + key + "' must be an integer or null");
  const int label = v.get<int>();
  if (label < 0) throw DataError(std::string("'") + key + "' must be nonnegative");
  return label;
}

inline std::string required_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw DataError(std::string("missing or non-string key '") + key + "'");
  }
  return j.at(key).get<std::string>();
}

}  // namespace detail

inline SampleRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("manifest line is not a JSON object");
  SampleRecord r;
  r.image_path = detail::required_string(j, "image_path");
  r.binary_label = parse_binary_label(detail::required_string(j, "binary_label"));
  r.method_label = detail::optional_label(j, "method_label");
  r.identity_label = detail::optional_label(j, "identity_label");
  r.video_id = detail::required_string(j, "video_id");
  r.split = parse_split(detail::required_string(j, "split"));
  if (j.contains("face_box") && !j["face_box"].is_null()) {
    const auto& b = j["face_box"];
    if (!b.is_array() || b.size() != 4) throw DataError("face_box must be [x, y, w, h]");
    r.face_box = FaceBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  }
  return r;
}

}  // namespace advdet
