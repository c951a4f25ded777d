#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "advdet/core/error.hpp"
#include "advdet/core/record_io.hpp"
#include "advdet/core/types.hpp"

namespace advdet {

struct ManifestSummary {
  std::map<std::string, int> per_split;
  std::map<std::string, int> per_class;
  std::map<int, int> per_method;
  std::map<int, int> per_identity;
  int n_videos = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["per_split"] = per_split;
    j["per_class"] = per_class;
    nlohmann::json methods = nlohmann::json::object();
    for (auto [m, n] : per_method) methods[std::to_string(m)] = n;
    nlohmann::json ids = nlohmann::json::object();
    for (auto [i, n] : per_identity) ids[std::to_string(i)] = n;
    j["per_method"] = methods;
    j["per_identity"] = ids;
    j["n_videos"] = n_videos;
    j["warnings"] = warnings;
    return j;
  }
};

struct Manifest {
  std::vector<SampleRecord> records;
  ManifestSummary summary;
  std::filesystem::path base_dir;  // image paths are resolved against this

  std::filesystem::path resolve(const SampleRecord& r) const {
    const std::filesystem::path p(r.image_path);
    return p.is_absolute() ? p : base_dir / p;
  }

  std::vector<SampleRecord> split(Split s) const {
    std::vector<SampleRecord> out;
    for (const auto& r : records) {
      if (r.split == s) out.push_back(r);
    }
    return out;
  }
};

/// Checks record and cross-record invariants; `line_of(i)` names the source line for messages.
template <class LineOf>
ManifestSummary validate_records(const std::vector<SampleRecord>& records, LineOf line_of) {
  ManifestSummary summary;
  struct VideoInfo {
    BinaryLabel label;
    Split split;
    std::size_t first;
  };
  std::unordered_map<std::string, VideoInfo> videos;
  std::set<std::string> paths;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = "line " + std::to_string(line_of(i));
    if (r.binary_label == BinaryLabel::kReal && r.method_label) {
      throw DataError(where + ": REAL record carries method_label " + std::to_string(*r.method_label));
    }
    if (r.face_box && (r.face_box->w <= 0 || r.face_box->h <= 0)) {
      throw DataError(where + ": face_box has non-positive extent");
    }
    auto [it, inserted] = videos.try_emplace(r.video_id, VideoInfo{r.binary_label, r.split, i});
    if (!inserted) {
      if (it->second.split != r.split) {
        throw DataError(where + ": split leak, video '" + r.video_id + "' appears in " +
                        to_string(it->second.split) + " and " + to_string(r.split));
      }
      if (it->second.label != r.binary_label) {
        throw DataError(where + ": video '" + r.video_id + "' mixes REAL and FAKE frames");
      }
    }
    if (r.is_fake() && !r.method_label) {
      summary.warnings.push_back(where + ": FAKE record without method_label");
    }
    if (!paths.insert(r.image_path).second) {
      summary.warnings.push_back(where + ": duplicate image_path '" + r.image_path + "'");
    }
    ++summary.per_split[to_string(r.split)];
    ++summary.per_class[to_string(r.binary_label)];
    if (r.method_label) ++summary.per_method[*r.method_label];
    if (r.identity_label) ++summary.per_identity[*r.identity_label];
  }
  summary.n_videos = static_cast<int>(videos.size());
  return summary;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::vector<std::size_t> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      m.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.detail());
    }
    lines.push_back(line_no);
  }
  m.summary = validate_records(m.records, [&lines](std::size_t i) { return lines[i]; });
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace advdet
