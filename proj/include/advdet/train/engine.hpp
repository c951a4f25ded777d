#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "advdet/autodiff/losses.hpp"
#include "advdet/autodiff/ops.hpp"
#include "advdet/core/config.hpp"
#include "advdet/core/error.hpp"
#include "advdet/data/image.hpp"
#include "advdet/data/manifest.hpp"
#include "advdet/data/preprocess.hpp"
#include "advdet/eval/metrics.hpp"
#include "advdet/identity/supervision.hpp"
#include "advdet/nn/adam.hpp"
#include "advdet/nn/networks.hpp"
#include "advdet/train/checkpoint.hpp"
#include "advdet/train/state.hpp"

namespace advdet::train {

using ad::Matrix;

/// Preprocessed images keyed by manifest index, loaded on first use.
template <class T>
class ImageStore {
 public:
  ImageStore(const Manifest& manifest, PreprocessSpec spec) : manifest_(&manifest), spec_(spec) {}

  int image_size() const { return spec_.output_size; }

  /// [size*size x 3] pixels of record i, row-major NHWC.
  const Matrix<T>& get(std::size_t i) {
    auto it = cache_.find(i);
    if (it != cache_.end()) return it->second;
    const auto& r = manifest_->records.at(i);
    const Image raw = read_ppm(manifest_->resolve(r));
    std::optional<CornerBox> box;
    if (r.face_box) box = CornerBox::from(*r.face_box);
    const Image img = preprocess(raw, box, spec_);
    Matrix<T> m(static_cast<Eigen::Index>(img.width) * img.height, 3);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(img.data[static_cast<std::size_t>(k)]);
    return cache_.emplace(i, std::move(m)).first->second;
  }

  Matrix<T> pack(std::span<const std::size_t> idx) {
    const Eigen::Index px = static_cast<Eigen::Index>(spec_.output_size) * spec_.output_size;
    Matrix<T> out(px * static_cast<Eigen::Index>(idx.size()), 3);
    for (std::size_t k = 0; k < idx.size(); ++k) out.middleRows(static_cast<Eigen::Index>(k) * px, px) = get(idx[k]);
    return out;
  }

 private:
  const Manifest* manifest_;
  PreprocessSpec spec_;
  std::unordered_map<std::size_t, Matrix<T>> cache_;
};

struct InferenceResult {
  FeatureMatrix features;         // generator output Z
  std::vector<double> fake_prob;  // classifier softmax, FAKE column
};

/// Inference-mode forward over `idx` in chunks.
template <class T>
InferenceResult run_inference(nn::DetectorModel<T>& model, ImageStore<T>& store, std::span<const std::size_t> idx,
                              std::size_t chunk = 64) {
  InferenceResult out;
  const int s = store.image_size();
  out.features.resize(static_cast<Eigen::Index>(idx.size()), model.generator().spec().output_dim);
  out.fake_prob.reserve(idx.size());
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const auto part = idx.subspan(start, std::min(chunk, idx.size() - start));
    const int m = static_cast<int>(part.size());
    ad::Graph<T> g(false);
    ad::Var x = g.constant(store.pack(part), ad::TensorShape{m, s, s, 3});
    ad::Var z = model.generator().forward(g, x);
    const Matrix<T>& logits = g.value(model.classifier().forward(g, z));
    out.features.middleRows(static_cast<Eigen::Index>(start), m) = g.value(z).template cast<double>();
    for (int i = 0; i < m; ++i) {
      const double a = logits(i, 0), b = logits(i, 1);
      out.fake_prob.push_back(1.0 / (1.0 + std::exp(a - b)));
    }
  }
  return out;
}

struct ValidationOutcome {
  double acc = 0.0;
  double auc = 0.0;
  bool improved = false;
  bool should_stop = false;
};

struct TrainSummary {
  std::int64_t iterations = 0;
  bool early_stopped = false;
  double best_val_acc = 0.0;
  int n_checks = 0;
  std::int64_t resumed_from = 0;
};

struct TrainerOptions {
  std::filesystem::path run_dir;  // empty: nothing is written
  std::shared_ptr<identity::EmbeddingOracle> oracle;
  /// Replaces the measured validation ACC (fixtures for stopping logic).
  std::function<double(const TrainState&)> validation_metric;
  bool resume = true;
  std::ostream* progress = nullptr;
  std::int64_t progress_every = 100;
};

/// Generator, classifier and discriminators trained jointly by one optimizer;
/// the gradient reversal nodes carry the adversarial objectives.
template <class T = float>
class Trainer {
 public:
  Trainer(AdversarialConfig cfg, const Manifest& manifest, TrainerOptions opt = {})
      : cfg_(std::move(cfg)), manifest_(manifest), opt_(std::move(opt)) {
    if (auto v = validate_config(cfg_); !v.ok()) throw ConfigError(v.message());
    model_ = std::make_unique<nn::DetectorModel<T>>(cfg_);
    store_ = std::make_unique<ImageStore<T>>(
        manifest_, PreprocessSpec{1.3, model_->generator().input_size(), FaceBoxSource::kManifestBox});
    adam_ = std::make_unique<nn::Adam<T>>(model_->trainable_parameters(cfg_));
    state_.ramp = RampState{0, cfg_.total_iters, cfg_.gamma};
    state_.rng = make_rng(cfg_.seed, "train/batches");
    std::size_t n_train = 0;
    for (std::size_t i = 0; i < manifest_.records.size(); ++i) {
      const auto s = manifest_.records[i].split;
      n_train += s == Split::kTrain;
      if (s == Split::kVal) val_idx_.push_back(i);
    }
    if (val_idx_.empty()) throw ConfigError("VAL split is empty; validation checks need at least one record");
    interval_ = check_interval(n_train, cfg_.batch_size, cfg_.checks_per_epoch);

    if (cfg_.identity_mode == IdentityMode::kSimilarity || cfg_.identity_mode == IdentityMode::kPseudoLabel) {
      if (!opt_.oracle) throw ConfigError("identity_mode " + to_string(cfg_.identity_mode) + " needs an embedding oracle");
    }
    if (cfg_.identity_mode == IdentityMode::kPseudoLabel) {
      pseudo_labels_ = identity::derive_pseudo_identity_labels(manifest_.records, *opt_.oracle, *cfg_.n_identities,
                                                                cfg_.seed);
    }
  }

  const AdversarialConfig& config() const { return cfg_; }
  TrainState& state() { return state_; }
  nn::DetectorModel<T>& model() { return *model_; }
  nn::Adam<T>& optimizer() { return *adam_; }
  std::int64_t check_every() const { return interval_; }
  const std::vector<int>& pseudo_labels() const { return pseudo_labels_; }

  std::vector<std::size_t> next_batch() {
    return sample_balanced_batch(std::span<const SampleRecord>(manifest_.records), cfg_.batch_size, state_.rng);
  }

  /// One forward/backward pass and optimizer update on the records `batch`.
  StepMetrics train_step(std::span<const std::size_t> batch) {
    if (state_.iteration >= cfg_.total_iters) throw ContractViolation("train_step past total_iters");
    StepMetrics sm;
    sm.iteration = state_.iteration;
    state_.ramp.current_iters = state_.iteration;
    sm.lambda = ramp_lambda(state_.ramp);
    sm.lr = learning_rate(state_.iteration, cfg_.total_iters, cfg_.base_lr);
    const T lambda = static_cast<T>(sm.lambda);

    const int m = static_cast<int>(batch.size());
    const int s = store_->image_size();
    ad::Graph<T> g;
    ad::Var x = g.constant(store_->pack(batch), ad::TensorShape{m, s, s, 3});
    ad::Var z = model_->generator().forward(g, x);

    std::vector<int> y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) y[i] = record(batch[i]).is_fake() ? 1 : 0;
    std::vector<ad::Var> terms{ad::cross_entropy(g, model_->classifier().forward(g, z), y)};
    std::vector<T> weights{T(1)};
    std::optional<ad::Var> lf, lid;

    if (cfg_.forgery_mode == ForgeryMode::kOn) {
      std::vector<int> rows, methods;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& r = record(batch[i]);
        if (!r.is_fake()) continue;
        if (!r.method_label) throw DataError("FAKE sample '" + r.image_path + "' has no method_label");
        rows.push_back(static_cast<int>(i));
        methods.push_back(*r.method_label);
      }
      if (!rows.empty()) {
        ad::Var zf = ad::gradient_reversal(g, ad::gather_rows(g, z, rows), lambda);
        lf = ad::cross_entropy(g, model_->forgery_disc().forward(g, zf), methods);
        terms.push_back(*lf);
        weights.push_back(static_cast<T>(cfg_.lambda1));
      }
    }

    switch (cfg_.identity_mode) {
      case IdentityMode::kOff: break;
      case IdentityMode::kHardLabel:
      case IdentityMode::kPseudoLabel: {
        std::vector<int> ids(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) ids[i] = identity_label(batch[i]);
        ad::Var zr = ad::gradient_reversal(g, z, lambda);
        lid = ad::cross_entropy(g, model_->identity_disc().forward(g, zr), ids);
        break;
      }
      case IdentityMode::kSimilarity: {
        std::vector<identity::Embedding> emb;
        emb.reserve(batch.size());
        for (std::size_t i : batch) emb.push_back(embedding(i));
        const auto sup = identity::similarity_supervision_from(emb, cfg_.tau);
        ad::Var pairs = ad::pairwise_sq_diff(g, ad::gradient_reversal(g, z, lambda));
        lid = ad::focal_pair_loss(g, model_->identity_disc().forward(g, pairs), sup.labels, cfg_.alpha, cfg_.beta,
                                  cfg_.normalize_pair_loss);
        break;
      }
    }
    if (lid) {
      terms.push_back(*lid);
      weights.push_back(static_cast<T>(cfg_.lambda2));
    }

    sm.l_cls = g.scalar(terms[0]);
    sm.l_f = lf ? g.scalar(*lf) : 0.0;
    sm.l_id = lid ? g.scalar(*lid) : 0.0;
    sm.l_tol = total_loss(sm.l_cls, sm.l_f, sm.l_id, cfg_);
    for (auto [name, v] : {std::pair{"l_cls", sm.l_cls}, std::pair{"l_f", sm.l_f}, std::pair{"l_id", sm.l_id}}) {
      if (!std::isfinite(v)) {
        throw NumericalError(std::string(name) + " is non-finite at iteration " + std::to_string(sm.iteration));
      }
    }

    ad::Var total = ad::weighted_sum(g, std::span<const ad::Var>(terms), std::span<const T>(weights));
    adam_->zero_grad();
    g.backward(total);
    adam_->step(sm.lr);
    ++state_.iteration;
    state_.ramp.current_iters = state_.iteration;
    return sm;
  }

  /// Frame-level VAL metrics, early-stopping bookkeeping and checkpointing.
  ValidationOutcome validation_check() {
    ValidationOutcome out;
    const auto inf = run_inference(*model_, *store_, std::span<const std::size_t>(val_idx_));
    std::vector<int> labels;
    for (std::size_t i : val_idx_) labels.push_back(record(i).is_fake() ? 1 : 0);
    out.acc = eval::accuracy_at(inf.fake_prob, labels);
    out.auc = has_both_classes(labels) ? eval::roc_auc(inf.fake_prob, labels) : std::nan("");
    if (opt_.validation_metric) out.acc = opt_.validation_metric(state_);
    const bool stop = EarlyStopping(cfg_.early_stop_patience, cfg_.improvement_eps).update(state_, out.acc);
    out.improved = state_.checks_since_improvement == 0;
    out.should_stop = stop || state_.iteration >= cfg_.total_iters;
    if (!opt_.run_dir.empty()) {
      nlohmann::json j{{"iteration", state_.iteration},
                       {"val_acc", out.acc},
                       {"val_auc", std::isnan(out.auc) ? nlohmann::json() : nlohmann::json(out.auc)},
                       {"best_val_acc", state_.best_val_metric},
                       {"checks_since_improvement", state_.checks_since_improvement},
                       {"check", state_.n_checks}};
      val_log_ << j.dump() << '\n';
      val_log_.flush();
      metrics_log_.flush();
      write_checkpoint(out.improved);
    }
    return out;
  }

  /// Trains until early stop or total_iters, resuming from `latest` when present.
  TrainSummary run() {
    TrainSummary sum;
    if (!opt_.run_dir.empty()) sum.resumed_from = open_run_dir();
    bool stopped_early = false;
    while (state_.iteration < cfg_.total_iters) {
      const auto batch = next_batch();
      const StepMetrics sm = train_step(batch);
      if (!opt_.run_dir.empty()) metrics_log_ << sm.to_json().dump() << '\n';
      if (opt_.progress && opt_.progress_every > 0 && state_.iteration % opt_.progress_every == 0) {
        *opt_.progress << "iter " << state_.iteration << " l_cls " << sm.l_cls << " l_f " << sm.l_f << " l_id "
                       << sm.l_id << " lambda " << sm.lambda << '\n';
      }
      if (state_.iteration % interval_ == 0 || state_.iteration == cfg_.total_iters) {
        const auto v = validation_check();
        if (v.should_stop) {
          stopped_early = state_.iteration < cfg_.total_iters;
          break;
        }
      }
    }
    metrics_log_.flush();
    sum.iterations = state_.iteration;
    sum.early_stopped = stopped_early;
    sum.best_val_acc = state_.best_val_metric;
    sum.n_checks = state_.n_checks;
    return sum;
  }

 private:
  const SampleRecord& record(std::size_t i) const { return manifest_.records[i]; }

  int identity_label(std::size_t i) const {
    if (cfg_.identity_mode == IdentityMode::kPseudoLabel) return pseudo_labels_[i];
    const auto& r = record(i);
    if (!r.identity_label) throw DataError("sample '" + r.image_path + "' has no identity label (HARD_LABEL mode)");
    if (*r.identity_label < 0 || *r.identity_label >= *cfg_.n_identities) {
      throw DataError("sample '" + r.image_path + "' identity label " + std::to_string(*r.identity_label) +
                      " outside [0, n_identities)");
    }
    return *r.identity_label;
  }

  const identity::Embedding& embedding(std::size_t i) {
    auto it = embeddings_.find(i);
    if (it == embeddings_.end()) it = embeddings_.emplace(i, opt_.oracle->embed(record(i))).first;
    return it->second;
  }

  static bool has_both_classes(const std::vector<int>& labels) {
    bool pos = false, neg = false;
    for (int l : labels) (l ? pos : neg) = true;
    return pos && neg;
  }

  std::filesystem::path ckpt_dir() const { return opt_.run_dir / "checkpoints"; }

  /// Prepares logs and restores `latest`; returns the iteration resumed from.
  std::int64_t open_run_dir() {
    namespace fs = std::filesystem;
    fs::create_directories(ckpt_dir());
    const auto cfg_path = opt_.run_dir / "config.json";
    const std::string hash = config_hash(cfg_);
    if (fs::exists(cfg_path)) {
      const auto existing = load_config(cfg_path);
      if (config_hash(existing) != hash) {
        throw ConfigError("run directory " + opt_.run_dir.string() + " holds a different config (hash " +
                          config_hash(existing) + ", requested " + hash + ")");
      }
    } else {
      std::ofstream(cfg_path) << config_to_json(cfg_).dump(2) << '\n';
    }

    std::int64_t from = 0;
    const auto latest = ckpt_dir() / "latest";
    if (opt_.resume && fs::exists(latest)) {
      const auto c = read_checkpoint<T>(latest);
      if (c.config_hash != hash) throw ConfigError("checkpoint " + latest.string() + " was written under another config");
      restore_parameters(c, model_->parameters(), latest.string());
      restore_optimizer(c, *adam_, latest.string());
      state_ = c.state;
      from = state_.iteration;
      if (fs::exists(ckpt_dir() / "best")) best_file_ = fs::read_symlink(ckpt_dir() / "best").string();
      latest_file_ = fs::read_symlink(latest).string();
    }
    truncate_log(opt_.run_dir / "metrics.jsonl", [from](std::int64_t it) { return it < from; });
    truncate_log(opt_.run_dir / "validation.jsonl", [from](std::int64_t it) { return it <= from; });
    metrics_log_.open(opt_.run_dir / "metrics.jsonl", std::ios::app);
    val_log_.open(opt_.run_dir / "validation.jsonl", std::ios::app);
    if (!metrics_log_ || !val_log_) throw IoError("cannot open logs in " + opt_.run_dir.string());
    return from;
  }

  template <class Keep>
  static void truncate_log(const std::filesystem::path& path, Keep keep) {
    std::vector<std::string> lines;
    if (std::ifstream in(path); in) {
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.contains("iteration") && keep(j["iteration"].get<std::int64_t>())) {
          lines.push_back(line);
        }
      }
    }
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
  }

  void write_checkpoint(bool improved) {
    namespace fs = std::filesystem;
    const std::string name = "ckpt_" + std::to_string(state_.iteration) + ".bin";
    save_checkpoint(ckpt_dir() / name, config_hash(cfg_), state_, model_->parameters(), *adam_);
    auto relink = [this](const std::string& link, const std::string& target) {
      const auto p = ckpt_dir() / link;
      std::error_code ec;
      fs::remove(p, ec);
      fs::create_symlink(target, p);
    };
    const std::string old_latest = latest_file_, old_best = best_file_;
    latest_file_ = name;
    relink("latest", name);
    if (improved) {
      best_file_ = name;
      relink("best", name);
    }
    std::error_code ec;
    for (const auto& old : {old_latest, old_best}) {
      if (!old.empty() && old != latest_file_ && old != best_file_) fs::remove(ckpt_dir() / old, ec);
    }
  }

  AdversarialConfig cfg_;
  const Manifest& manifest_;
  TrainerOptions opt_;
  std::unique_ptr<nn::DetectorModel<T>> model_;
  std::unique_ptr<ImageStore<T>> store_;
  std::unique_ptr<nn::Adam<T>> adam_;
  TrainState state_;
  std::vector<std::size_t> val_idx_;
  std::int64_t interval_ = 1;
  std::vector<int> pseudo_labels_;
  std::unordered_map<std::size_t, identity::Embedding> embeddings_;
  std::ofstream metrics_log_, val_log_;
  std::string latest_file_, best_file_;
};

template <class T>
struct TrainedModel {
  AdversarialConfig config;
  std::unique_ptr<nn::DetectorModel<T>> model;
  std::int64_t iteration = 0;
  std::filesystem::path checkpoint;
};

/// Rebuilds the model of a run directory from `checkpoints/<which>` ("latest" or "best").
template <class T = float>
TrainedModel<T> load_trained_model(const std::filesystem::path& run_dir, const std::string& which = "latest") {
  if (which != "latest" && which != "best") throw ConfigError("checkpoint must be 'latest' or 'best', got '" + which + "'");
  const auto cfg_path = run_dir / "config.json";
  if (!std::filesystem::exists(cfg_path)) throw DataError("no config.json in run directory " + run_dir.string());
  TrainedModel<T> out;
  out.config = load_config(cfg_path.string());
  out.checkpoint = run_dir / "checkpoints" / which;
  if (!std::filesystem::exists(out.checkpoint)) throw DataError("no checkpoint " + out.checkpoint.string());
  const auto c = read_checkpoint<T>(out.checkpoint);
  if (c.config_hash != config_hash(out.config)) {
    throw IntegrityError(out.checkpoint.string(), "config hash does not match " + cfg_path.string());
  }
  out.model = std::make_unique<nn::DetectorModel<T>>(out.config);
  restore_parameters(c, out.model->parameters(), out.checkpoint.string());
  out.iteration = c.state.iteration;
  return out;
}

}  // namespace advdet::train
