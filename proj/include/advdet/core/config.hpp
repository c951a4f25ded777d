#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advdet/core/error.hpp"
#include "advdet/core/rng.hpp"

namespace advdet {

enum class IdentityMode { kHardLabel, kSimilarity, kPseudoLabel, kOff };
enum class ForgeryMode { kOn, kOff };
enum class GeneratorKind { kXception2048, kToyCnn };

inline std::string to_string(IdentityMode mode) {
  switch (mode) {
    case IdentityMode::kHardLabel: return "HARD_LABEL";
    case IdentityMode::kSimilarity: return "SIMILARITY";
    case IdentityMode::kPseudoLabel: return "PSEUDO_LABEL";
    case IdentityMode::kOff: return "OFF";
  }
  return "?";
}

inline std::string to_string(ForgeryMode mode) { return mode == ForgeryMode::kOn ? "ON" : "OFF"; }

inline std::string to_string(GeneratorKind kind) {
  return kind == GeneratorKind::kXception2048 ? "XCEPTION_2048" : "TOY_CNN";
}

inline IdentityMode parse_identity_mode(const std::string& text) {
  if (text == "HARD_LABEL") return IdentityMode::kHardLabel;
  if (text == "SIMILARITY") return IdentityMode::kSimilarity;
  if (text == "PSEUDO_LABEL") return IdentityMode::kPseudoLabel;
  if (text == "OFF") return IdentityMode::kOff;
  throw ConfigError("unknown identity_mode '" + text + "'");
}

inline ForgeryMode parse_forgery_mode(const std::string& text) {
  if (text == "ON") return ForgeryMode::kOn;
  if (text == "OFF") return ForgeryMode::kOff;
  throw ConfigError("unknown forgery_mode '" + text + "'");
}

inline GeneratorKind parse_generator_kind(const std::string& text) {
  if (text == "XCEPTION_2048") return GeneratorKind::kXception2048;
  if (text == "TOY_CNN") return GeneratorKind::kToyCnn;
  throw ConfigError("unknown generator '" + text + "'");
}

/// Every hyperparameter of a run. Field names match the JSON keys.
struct AdversarialConfig {
  double lambda1 = 0.8;   // forgery-method adversarial weight
  double lambda2 = 5.0;   // identity adversarial weight
  double gamma = 10.0;    // GRL ramp steepness
  double tau = 0.07;      // identity-similarity threshold
  double alpha = 0.25;    // focal class weight
  double beta = 2.0;      // focal exponent
  int feature_dim = 2048;
  int n_methods = 4;
  std::optional<int> n_identities;
  IdentityMode identity_mode = IdentityMode::kSimilarity;
  ForgeryMode forgery_mode = ForgeryMode::kOn;
  int batch_size = 64;
  std::int64_t total_iters = 20000;
  double base_lr = 1e-4;
  std::int64_t seed = 0;

  // Framework knobs beyond the core hyperparameters.
  bool normalize_pair_loss = false;
  GeneratorKind generator = GeneratorKind::kXception2048;
  std::string generator_weights;  // pretrained backbone file, XCEPTION_2048 only
  int image_size = 299;
  int checks_per_epoch = 10;
  int early_stop_patience = 20;  // 0 disables early stopping
  double improvement_eps = 1e-4;
  int max_frames_per_video = 110;

  bool operator==(const AdversarialConfig&) const = default;

  /// Desk-scale defaults: TOY_CNN on 32x32 inputs with 64-d features.
  static AdversarialConfig toy_defaults() {
    AdversarialConfig cfg;
    cfg.generator = GeneratorKind::kToyCnn;
    cfg.feature_dim = 64;
    cfg.image_size = 32;
    return cfg;
  }
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string message() const {
    std::string out;
    for (const auto& v : violations) out += (out.empty() ? "" : "; ") + v;
    return out;
  }
};

inline ValidationResult validate_config(const AdversarialConfig& cfg) {
  ValidationResult r;
  auto need = [&r](bool cond, const char* msg) {
    if (!cond) r.violations.emplace_back(msg);
  };
  need(cfg.lambda1 >= 0, "lambda1 must be nonnegative");
  need(cfg.lambda2 >= 0, "lambda2 must be nonnegative");
  need(cfg.gamma > 0, "gamma must be positive");
  need(cfg.tau >= -1 && cfg.tau <= 1, "tau must lie in [-1, 1]");
  need(cfg.alpha > 0 && cfg.alpha < 1, "alpha must lie in (0, 1)");
  need(cfg.beta >= 0, "beta must be nonnegative");
  need(cfg.feature_dim > 0, "feature_dim must be positive");
  need(cfg.n_methods > 0, "n_methods must be positive");
  need(!cfg.n_identities || *cfg.n_identities > 0, "n_identities must be positive when present");
  need(cfg.identity_mode != IdentityMode::kHardLabel || cfg.n_identities.has_value(),
       "identity_mode HARD_LABEL requires n_identities");
  need(cfg.identity_mode != IdentityMode::kPseudoLabel || cfg.n_identities.has_value(),
       "identity_mode PSEUDO_LABEL requires n_identities (cluster count)");
  need(cfg.batch_size > 0, "batch_size must be positive");
  need(cfg.batch_size % 2 == 0, "batch_size must be even");
  need(cfg.total_iters > 0, "total_iters must be positive");
  need(cfg.base_lr > 0, "base_lr must be positive");
  need(cfg.generator != GeneratorKind::kXception2048 || cfg.feature_dim == 2048,
       "XCEPTION_2048 generator requires feature_dim 2048");
  need(cfg.image_size > 0, "image_size must be positive");
  need(cfg.checks_per_epoch > 0, "checks_per_epoch must be positive");
  need(cfg.early_stop_patience >= 0, "early_stop_patience must be nonnegative");
  need(cfg.improvement_eps >= 0, "improvement_eps must be nonnegative");
  need(cfg.max_frames_per_video > 0, "max_frames_per_video must be positive");
  return r;
}

inline nlohmann::json config_to_json(const AdversarialConfig& cfg) {
  nlohmann::json j;
  j["lambda1"] = cfg.lambda1;
  j["lambda2"] = cfg.lambda2;
  j["gamma"] = cfg.gamma;
  j["tau"] = cfg.tau;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["feature_dim"] = cfg.feature_dim;
  j["n_methods"] = cfg.n_methods;
  j["n_identities"] = cfg.n_identities ? nlohmann::json(*cfg.n_identities) : nlohmann::json(nullptr);
  j["identity_mode"] = to_string(cfg.identity_mode);
  j["forgery_mode"] = to_string(cfg.forgery_mode);
  j["batch_size"] = cfg.batch_size;
  j["total_iters"] = cfg.total_iters;
  j["base_lr"] = cfg.base_lr;
  j["seed"] = cfg.seed;
  j["normalize_pair_loss"] = cfg.normalize_pair_loss;
  j["generator"] = to_string(cfg.generator);
  j["generator_weights"] = cfg.generator_weights;
  j["image_size"] = cfg.image_size;
  j["checks_per_epoch"] = cfg.checks_per_epoch;
  j["early_stop_patience"] = cfg.early_stop_patience;
  j["improvement_eps"] = cfg.improvement_eps;
  j["max_frames_per_video"] = cfg.max_frames_per_video;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected so typos surface.
inline AdversarialConfig config_from_json(const nlohmann::json& j, AdversarialConfig cfg = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "lambda1", "lambda2", "gamma", "tau", "alpha", "beta", "feature_dim", "n_methods",
      "n_identities", "identity_mode", "forgery_mode", "batch_size", "total_iters", "base_lr",
      "seed", "normalize_pair_loss", "generator", "generator_weights", "image_size",
      "checks_per_epoch", "early_stop_patience", "improvement_eps", "max_frames_per_video"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lambda1", cfg.lambda1);
    get("lambda2", cfg.lambda2);
    get("gamma", cfg.gamma);
    get("tau", cfg.tau);
    get("alpha", cfg.alpha);
    get("beta", cfg.beta);
    get("feature_dim", cfg.feature_dim);
    get("n_methods", cfg.n_methods);
    if (j.contains("n_identities")) {
      cfg.n_identities = j["n_identities"].is_null() ? std::nullopt
                                                     : std::optional<int>(j["n_identities"].get<int>());
    }
    if (j.contains("identity_mode")) cfg.identity_mode = parse_identity_mode(j["identity_mode"].get<std::string>());
    if (j.contains("forgery_mode")) cfg.forgery_mode = parse_forgery_mode(j["forgery_mode"].get<std::string>());
    get("batch_size", cfg.batch_size);
    get("total_iters", cfg.total_iters);
    get("base_lr", cfg.base_lr);
    get("seed", cfg.seed);
    get("normalize_pair_loss", cfg.normalize_pair_loss);
    if (j.contains("generator")) cfg.generator = parse_generator_kind(j["generator"].get<std::string>());
    get("generator_weights", cfg.generator_weights);
    get("image_size", cfg.image_size);
    get("checks_per_epoch", cfg.checks_per_epoch);
    get("early_stop_patience", cfg.early_stop_patience);
    get("improvement_eps", cfg.improvement_eps);
    get("max_frames_per_video", cfg.max_frames_per_video);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return cfg;
}

inline AdversarialConfig load_config(const std::string& path, AdversarialConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse config file " + path + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

/// Stable fingerprint of a config (keys are dumped in sorted order).
inline std::string config_hash(const AdversarialConfig& cfg) {
  std::ostringstream os;
  os << std::hex << fnv1a64(config_to_json(cfg).dump());
  return os.str();
}

}  // namespace advdet
