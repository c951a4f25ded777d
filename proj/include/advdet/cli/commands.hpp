#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <new>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advdet/core/config.hpp"
#include "advdet/core/error.hpp"
#include "advdet/core/types.hpp"
#include "advdet/data/factor_dataset.hpp"
#include "advdet/data/manifest.hpp"
#include "advdet/eval/metrics.hpp"
#include "advdet/eval/probe.hpp"
#include "advdet/identity/embedding.hpp"
#include "advdet/identity/supervision.hpp"
#include "advdet/train/engine.hpp"

namespace advdet::cli {

namespace fs = std::filesystem;

/// Record subsets a command can operate on. HELDOUT is VAL and TEST together.
enum class Subset { kTrain, kVal, kTest, kHeldout, kAll };

inline Subset parse_subset(const std::string& text) {
  const std::string u = upper(text);
  if (u == "TRAIN") return Subset::kTrain;
  if (u == "VAL") return Subset::kVal;
  if (u == "TEST") return Subset::kTest;
  if (u == "HELDOUT") return Subset::kHeldout;
  if (u == "ALL") return Subset::kAll;
  throw ConfigError("unknown split '" + text + "' (expected train, val, test, heldout or all)");
}

inline std::string to_string(Subset s) {
  switch (s) {
    case Subset::kTrain: return "train";
    case Subset::kVal: return "val";
    case Subset::kTest: return "test";
    case Subset::kHeldout: return "heldout";
    case Subset::kAll: return "all";
  }
  return "?";
}

inline bool in_subset(Split s, Subset sub) {
  switch (sub) {
    case Subset::kTrain: return s == Split::kTrain;
    case Subset::kVal: return s == Split::kVal;
    case Subset::kTest: return s == Split::kTest;
    case Subset::kHeldout: return s != Split::kTrain;
    case Subset::kAll: return true;
  }
  return false;
}

inline std::vector<std::size_t> select_records(const Manifest& m, Subset sub) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (in_subset(m.records[i].split, sub)) idx.push_back(i);
  }
  return idx;
}

inline ForgeryMode parse_adv_forgery(const std::string& flag) {
  if (flag == "on") return ForgeryMode::kOn;
  if (flag == "off") return ForgeryMode::kOff;
  throw ConfigError("--adv-forgery expects on|off, got '" + flag + "'");
}

inline IdentityMode parse_adv_identity(const std::string& flag) {
  if (flag == "hard") return IdentityMode::kHardLabel;
  if (flag == "sim") return IdentityMode::kSimilarity;
  if (flag == "pseudo") return IdentityMode::kPseudoLabel;
  if (flag == "off") return IdentityMode::kOff;
  throw ConfigError("--adv-identity expects hard|sim|pseudo|off, got '" + flag + "'");
}

inline eval::ProbeTarget parse_probe_target(const std::string& flag) {
  if (flag == "method") return eval::ProbeTarget::kForgeryMethod;
  if (flag == "identity") return eval::ProbeTarget::kIdentity;
  throw ConfigError("--target expects method|identity, got '" + flag + "'");
}

inline eval::ClusterAlgorithm parse_algorithm(const std::string& flag) {
  if (flag == "kmeans") return eval::ClusterAlgorithm::kKMeans;
  if (flag == "gmm") return eval::ClusterAlgorithm::kGaussianMixture;
  throw ConfigError("--algorithm expects kmeans|gmm, got '" + flag + "'");
}

/// "lo,hi" with both parts in [0, 1].
inline std::pair<double, double> parse_band(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("quantile band must look like 'lo,hi', got '" + text + "'");
  try {
    std::size_t used = 0;
    const double lo = std::stod(text.substr(0, comma), &used);
    const std::string rest = text.substr(comma + 1);
    const double hi = std::stod(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw ConfigError("quantile band must look like 'lo,hi', got '" + text + "'");
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Embedding oracle flags

struct OracleFlags {
  std::string provider = "cache";  // cache | synthetic | arcface
  fs::path embeddings;             // default: embeddings.bin next to the manifest
  fs::path arcface_model;
  std::int64_t synthetic_seed = 0;
};

inline std::shared_ptr<identity::EmbeddingOracle> make_oracle(const OracleFlags& f, const fs::path& manifest_path) {
  identity::OracleOptions o;
  o.cache_path = f.embeddings.empty() ? manifest_path.parent_path() / "embeddings.bin" : f.embeddings;
  o.seed = f.synthetic_seed;
  o.model_path = f.arcface_model;
  if (f.provider == "cache") {
    o.provider = identity::ProviderId::kCacheOnly;
  } else if (f.provider == "synthetic") {
    o.provider = identity::ProviderId::kSyntheticFactor;
  } else if (f.provider == "arcface") {
    o.provider = identity::ProviderId::kArcfaceOnnxFile;
    o.cache_source = identity::ProviderId::kArcfaceOnnxFile;
  } else {
    throw ConfigError("--provider expects cache|synthetic|arcface, got '" + f.provider + "'");
  }
  return identity::make_oracle(o);
}

// ---------------------------------------------------------------------------
// prepare-synthetic

struct PrepareResult {
  fs::path manifest_path;
  ManifestSummary summary;
};

inline PrepareResult cmd_prepare_synthetic(const FactorDatasetSpec& spec, const fs::path& out_dir,
                                           std::ostream& out = std::cout) {
  const auto ds = generate_factor_dataset(spec, out_dir);
  const Manifest m = load_manifest(ds.manifest_path);
  nlohmann::json j{{"manifest", ds.manifest_path.string()},
                   {"embeddings", ds.embeddings_path.string()},
                   {"n_records", m.records.size()},
                   {"summary", m.summary.to_json()}};
  out << j.dump(2) << '\n';
  return {ds.manifest_path, m.summary};
}

// ---------------------------------------------------------------------------
// calibrate-tau

struct CalibrateArgs {
  fs::path manifest;
  OracleFlags oracle;
  identity::CalibrationOptions options;
  fs::path out = "tau_calibration.json";
  fs::path curve_out;  // default: <out stem>_curve.csv
};

inline identity::CalibrationReport cmd_calibrate_tau(const CalibrateArgs& a, std::ostream& out = std::cout) {
  const Manifest m = load_manifest(a.manifest);
  if (m.records.empty()) throw DataError("manifest " + a.manifest.string() + " has no records");
  auto oracle = make_oracle(a.oracle, a.manifest);
  const auto rep = identity::calibrate_tau(m.records, *oracle, a.options);

  auto j = rep.to_json();
  j["provider"] = identity::to_string(oracle->provider());
  j["quantile_band"] = {a.options.quantile_band.first, a.options.quantile_band.second};
  write_json(a.out, j);

  fs::path curve = a.curve_out;
  if (curve.empty()) curve = a.out.parent_path() / (a.out.stem().string() + "_curve.csv");
  std::ofstream csv(curve, std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write " + curve.string());
  csv << "similarity,cumulative_probability\n";
  char buf[64];
  for (auto [s, p] : rep.cumulative_curve) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", s, p);
    csv << buf;
  }
  if (!csv) throw IoError("write failed for " + curve.string());

  out << "candidate range [" << rep.candidate_range.first << ", " << rep.candidate_range.second << "] from "
      << rep.n_pairs << " pairs\ntau grid:";
  for (double t : rep.grid) out << ' ' << t;
  out << '\n';
  return rep;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  fs::path manifest;
  std::optional<fs::path> config;
  fs::path run_dir;
  std::optional<std::string> adv_forgery;   // on | off
  std::optional<std::string> adv_identity;  // hard | sim | pseudo | off
  std::optional<double> tau;
  std::optional<std::int64_t> seed;
  OracleFlags oracle;
  std::ostream* progress = nullptr;
};

/// Config file (or built-in defaults) with the command-line overrides applied.
inline AdversarialConfig resolve_train_config(const TrainArgs& a, const Manifest& m) {
  AdversarialConfig cfg = a.config ? load_config(a.config->string()) : AdversarialConfig{};
  if (a.adv_forgery) cfg.forgery_mode = parse_adv_forgery(*a.adv_forgery);
  if (a.adv_identity) cfg.identity_mode = parse_adv_identity(*a.adv_identity);
  if (a.tau) cfg.tau = *a.tau;
  if (a.seed) cfg.seed = *a.seed;
  const bool needs_ids = cfg.identity_mode == IdentityMode::kHardLabel || cfg.identity_mode == IdentityMode::kPseudoLabel;
  if (needs_ids && !cfg.n_identities && !m.summary.per_identity.empty()) {
    cfg.n_identities = static_cast<int>(m.summary.per_identity.size());
  }
  if (auto v = validate_config(cfg); !v.ok()) throw ConfigError(v.message());
  return cfg;
}

inline train::TrainSummary cmd_train(const TrainArgs& a, std::ostream& out = std::cout) {
  if (a.run_dir.empty()) throw ConfigError("train needs --run-dir");
  const Manifest m = load_manifest(a.manifest);
  const AdversarialConfig cfg = resolve_train_config(a, m);
  train::TrainerOptions opt;
  opt.run_dir = a.run_dir;
  opt.progress = a.progress;
  if (cfg.identity_mode == IdentityMode::kSimilarity || cfg.identity_mode == IdentityMode::kPseudoLabel) {
    opt.oracle = make_oracle(a.oracle, a.manifest);
  }
  train::Trainer<float> trainer(cfg, m, opt);
  const auto s = trainer.run();
  nlohmann::json j{{"iterations", s.iterations},       {"early_stopped", s.early_stopped},
                   {"best_val_acc", s.best_val_acc},   {"n_checks", s.n_checks},
                   {"resumed_from", s.resumed_from},   {"forgery_mode", to_string(cfg.forgery_mode)},
                   {"identity_mode", to_string(cfg.identity_mode)}, {"config_hash", config_hash(cfg)}};
  write_json(a.run_dir / "train_summary.json", j);
  out << j.dump(2) << '\n';
  return s;
}

// ---------------------------------------------------------------------------
// Shared inference over a trained run

struct RunInference {
  AdversarialConfig config;
  std::vector<std::size_t> indices;
  train::InferenceResult result;
};

inline RunInference infer_subset(const fs::path& run_dir, const Manifest& m, Subset sub, const std::string& checkpoint) {
  RunInference out;
  out.indices = select_records(m, sub);
  if (out.indices.empty()) throw DataError("split " + to_string(sub) + " has no records");
  auto trained = train::load_trained_model<float>(run_dir, checkpoint);
  out.config = trained.config;
  train::ImageStore<float> store(m, PreprocessSpec{1.3, trained.model->generator().input_size(),
                                                   FaceBoxSource::kManifestBox});
  out.result = train::run_inference(*trained.model, store, std::span<const std::size_t>(out.indices));
  return out;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  fs::path run_dir;
  fs::path manifest;
  std::string split = "test";
  std::string checkpoint = "latest";
  fs::path out;  // default: <run_dir>/eval_<split>.json
};

inline eval::EvalReport cmd_evaluate(const EvaluateArgs& a, std::ostream& out = std::cout) {
  const Manifest m = load_manifest(a.manifest);
  const Subset sub = parse_subset(a.split);
  const auto inf = infer_subset(a.run_dir, m, sub, a.checkpoint);
  std::vector<eval::LabeledFrame> frames;
  frames.reserve(inf.indices.size());
  for (std::size_t k = 0; k < inf.indices.size(); ++k) {
    const auto& r = m.records[inf.indices[k]];
    frames.push_back({r.video_id, r.is_fake() ? 1 : 0, inf.result.fake_prob[k]});
  }
  const auto rep = eval::evaluate_frames(frames, inf.config.max_frames_per_video);
  auto j = rep.to_json();
  j["split"] = to_string(sub);
  j["checkpoint"] = a.checkpoint;
  write_json(a.out.empty() ? a.run_dir / ("eval_" + to_string(sub) + ".json") : a.out, j);
  out << j.dump(2) << '\n';
  return rep;
}

// ---------------------------------------------------------------------------
// probe-clustering

struct ProbeArgs {
  fs::path run_dir;
  fs::path manifest;
  std::string target = "method";
  std::string algorithm = "kmeans";
  std::string split = "heldout";
  std::string checkpoint = "latest";
  std::int64_t seed = 0;
  fs::path out;  // default: <run_dir>/probe_<target>_<algorithm>_<split>.json
};

/// FAKE records for the method target, REAL records for the identity target.
inline std::pair<std::vector<std::size_t>, std::vector<int>> probe_rows(const Manifest& m,
                                                                        std::span<const std::size_t> idx,
                                                                        eval::ProbeTarget target) {
  std::vector<std::size_t> rows;
  std::vector<int> labels;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& r = m.records[idx[k]];
    const bool method = target == eval::ProbeTarget::kForgeryMethod;
    if (r.is_fake() != method) continue;
    const auto& label = method ? r.method_label : r.identity_label;
    if (!label) {
      throw DataError("sample '" + r.image_path + "' has no " + (method ? "method" : "identity") + " label");
    }
    rows.push_back(k);
    labels.push_back(*label);
  }
  if (rows.empty()) {
    throw DataError(std::string("no ") + (target == eval::ProbeTarget::kForgeryMethod ? "FAKE" : "REAL") +
                    " records in the probed split");
  }
  return {rows, labels};
}

inline eval::ClusterProbeReport cmd_probe_clustering(const ProbeArgs& a, std::ostream& out = std::cout) {
  const auto target = parse_probe_target(a.target);
  const auto algorithm = parse_algorithm(a.algorithm);
  const Subset sub = parse_subset(a.split);
  const Manifest m = load_manifest(a.manifest);
  const auto inf = infer_subset(a.run_dir, m, sub, a.checkpoint);
  const auto [rows, labels] = probe_rows(m, inf.indices, target);
  FeatureMatrix x(static_cast<Eigen::Index>(rows.size()), inf.result.features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = inf.result.features.row(static_cast<Eigen::Index>(rows[i]));
  }
  const int k = static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
  const auto rep = eval::clustering_accuracy_probe(x, labels, algorithm, k, a.seed, target);
  auto j = rep.to_json();
  j["split"] = to_string(sub);
  j["checkpoint"] = a.checkpoint;
  const std::string name = "probe_" + a.target + "_" + a.algorithm + "_" + to_string(sub) + ".json";
  write_json(a.out.empty() ? a.run_dir / name : a.out, j);
  out << j.dump(2) << '\n';
  return rep;
}

// ---------------------------------------------------------------------------
// export-features

struct ExportArgs {
  fs::path run_dir;
  fs::path manifest;
  std::string split = "test";
  std::string checkpoint = "latest";
  fs::path out;  // default: <run_dir>/features_<split>.csv
};

inline std::size_t cmd_export_features(const ExportArgs& a, std::ostream& out = std::cout) {
  const Manifest m = load_manifest(a.manifest);
  const Subset sub = parse_subset(a.split);
  const auto inf = infer_subset(a.run_dir, m, sub, a.checkpoint);
  FeatureBatch batch;
  batch.features = inf.result.features;
  for (std::size_t i : inf.indices) {
    const auto& r = m.records[i];
    batch.sample_ids.push_back(r.image_path);
    batch.binary_labels.push_back(r.binary_label);
    batch.method_labels.push_back(r.method_label);
    batch.identity_labels.push_back(r.identity_label);
  }
  const fs::path path = a.out.empty() ? a.run_dir / ("features_" + to_string(sub) + ".csv") : a.out;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  eval::write_feature_csv(path, batch);
  out << "wrote " << batch.size() << " rows x " << batch.features.cols() << " features to " << path.string() << '\n';
  return batch.size();
}

// ---------------------------------------------------------------------------

/// Runs `body` and maps failures to the documented exit codes.
inline int run_guarded(const std::function<void()>& body, std::ostream& err = std::cerr) {
  try {
    body();
    return static_cast<int>(ExitCode::kOk);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kRuntime);
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return static_cast<int>(ExitCode::kRuntime);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kRuntime);
  }
}

}  // namespace advdet::cli
