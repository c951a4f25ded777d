#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "advdet/autodiff/graph.hpp"
#include "advdet/autodiff/ops.hpp"
#include "advdet/core/config.hpp"
#include "advdet/core/error.hpp"
#include "advdet/nn/layers.hpp"

namespace advdet::nn {

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::kToyCnn;
  int output_dim = 64;
  bool pretrained = false;

  /// Expected square input resolution.
  int input_size() const { return kind == GeneratorKind::kXception2048 ? 299 : 32; }
};

inline void check_generator_spec(const GeneratorSpec& s) {
  if (s.output_dim <= 0) throw ConfigError("generator output_dim must be positive");
  if (s.kind == GeneratorKind::kXception2048 && s.output_dim != 2048) {
    throw ConfigError("XCEPTION_2048 generator has output_dim 2048, got " + std::to_string(s.output_dim));
  }
}

/// Feature generator G: images [M x H x W x 3] -> features [M x output_dim].
template <class T>
class FeatureGenerator {
 public:
  virtual ~FeatureGenerator() = default;
  virtual const GeneratorSpec& spec() const = 0;
  virtual int input_size() const = 0;
  virtual Var forward(Graph<T>& g, Var images) = 0;
  virtual std::vector<Parameter<T>*> parameters() = 0;
};

/// Three conv blocks (3x3 conv, ReLU, 2x2 max pool on the first two) and global average pooling.
template <class T>
class ToyCnn final : public FeatureGenerator<T> {
 public:
  ToyCnn(GeneratorSpec spec, std::int64_t seed, int input_size = 32) : spec_(spec), input_size_(input_size) {
    check_generator_spec(spec_);
    if (input_size_ % 4 != 0) throw ConfigError("TOY_CNN input size must be a multiple of 4");
    conv1_ = Conv3x3<T>("generator.conv1", 3, 8, seed);
    conv2_ = Conv3x3<T>("generator.conv2", 8, 16, seed);
    conv3_ = Conv3x3<T>("generator.conv3", 16, spec_.output_dim, seed);
  }

  const GeneratorSpec& spec() const override { return spec_; }
  int input_size() const override { return input_size_; }

  Var forward(Graph<T>& g, Var x) override {
    const auto s = g.shape(x);
    if (s.h != input_size_ || s.w != input_size_ || s.c != 3) {
      throw ShapeError("TOY_CNN expects " + std::to_string(input_size_) + "x" + std::to_string(input_size_) +
                       "x3 input, got " + std::to_string(s.h) + "x" + std::to_string(s.w) + "x" +
                       std::to_string(s.c));
    }
    x = ad::max_pool2(g, ad::relu(g, ad::layer_norm(g, conv1_.forward(g, x))));
    x = ad::max_pool2(g, ad::relu(g, ad::layer_norm(g, conv2_.forward(g, x))));
    x = ad::relu(g, ad::layer_norm(g, conv3_.forward(g, x)));
    return ad::global_avg_pool(g, x);
  }

  std::vector<Parameter<T>*> parameters() override {
    std::vector<Parameter<T>*> out;
    conv1_.collect(out);
    conv2_.collect(out);
    conv3_.collect(out);
    return out;
  }

 private:
  GeneratorSpec spec_;
  int input_size_;
  Conv3x3<T> conv1_, conv2_, conv3_;
};

/// Hook for the pretrained 2048-d backbone. The framework ships no Xception
/// implementation; a host program registers one that reads `weights_path`.
template <class T>
struct BackboneRegistry {
  using Factory = std::function<std::unique_ptr<FeatureGenerator<T>>(const GeneratorSpec&, const std::string&)>;
  static Factory& xception() {
    static Factory f;
    return f;
  }
};

template <class T>
std::unique_ptr<FeatureGenerator<T>> make_generator(const GeneratorSpec& spec, std::int64_t seed,
                                                    const std::string& weights_path = {}, int input_size = 0) {
  check_generator_spec(spec);
  if (spec.kind == GeneratorKind::kToyCnn) {
    return std::make_unique<ToyCnn<T>>(spec, seed, input_size > 0 ? input_size : spec.input_size());
  }
  auto& factory = BackboneRegistry<T>::xception();
  if (!factory) {
    throw ConfigError("XCEPTION_2048 backbone is not available in this build; register a backbone factory "
                      "and supply a pretrained weights file");
  }
  if (weights_path.empty()) throw ConfigError("XCEPTION_2048 requires generator_weights (the framework never downloads)");
  auto gen = factory(spec, weights_path);
  if (!gen || gen->spec().output_dim != 2048) throw ConfigError("registered backbone must emit 2048-d features");
  return gen;
}

/// Runs G in inference mode over a packed NHWC image matrix [M*H*W x 3].
template <class T>
Matrix<T> forward_generator(FeatureGenerator<T>& gen, const Matrix<T>& images, int m) {
  const int size = gen.input_size();
  const Eigen::Index expected = static_cast<Eigen::Index>(m) * size * size;
  if (images.rows() != expected || images.cols() != 3) {
    const long long per = m > 0 ? static_cast<long long>(images.rows() / m) : 0;
    throw ShapeError("generator expects " + std::to_string(m) + " images of " + std::to_string(size) + "x" +
                     std::to_string(size) + "x3, got " + std::to_string(per) + " pixels x " +
                     std::to_string(images.cols()) + " channels per image");
  }
  Graph<T> g(false);
  Var x = g.constant(images, ad::TensorShape{m, size, size, 3});
  return g.value(gen.forward(g, x));
}

// ---------------------------------------------------------------------------
// Heads

enum class HeadKind { kBinaryCls, kForgeryDisc, kIdDiscHard, kIdDiscSim };

inline std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::kBinaryCls: return "BINARY_CLS";
    case HeadKind::kForgeryDisc: return "FORGERY_DISC";
    case HeadKind::kIdDiscHard: return "ID_DISC_HARD";
    case HeadKind::kIdDiscSim: return "ID_DISC_SIM";
  }
  return "?";
}

struct HeadSpec {
  HeadKind head = HeadKind::kBinaryCls;
  std::vector<int> hidden_dims;
  int output_dim = 2;
  bool operator==(const HeadSpec&) const = default;
};

/// Canonical head layout; `classes` is N for FORGERY_DISC and N_id for ID_DISC_HARD.
inline HeadSpec make_head_spec(HeadKind kind, int classes = 0) {
  switch (kind) {
    case HeadKind::kBinaryCls: return {kind, {}, 2};
    case HeadKind::kForgeryDisc:
    case HeadKind::kIdDiscHard:
      if (classes <= 0) throw ConfigError(to_string(kind) + " needs a positive class count");
      return {kind, {512, 512}, classes};
    case HeadKind::kIdDiscSim: return {kind, {512, 512}, 1};
  }
  throw ConfigError("unknown head kind");
}

inline void check_head_spec(const HeadSpec& s) {
  const bool ok = [&] {
    switch (s.head) {
      case HeadKind::kBinaryCls: return s.hidden_dims.empty() && s.output_dim == 2;
      case HeadKind::kForgeryDisc:
      case HeadKind::kIdDiscHard: return s.hidden_dims == std::vector<int>{512, 512} && s.output_dim > 0;
      case HeadKind::kIdDiscSim: return s.hidden_dims == std::vector<int>{512, 512} && s.output_dim == 1;
    }
    return false;
  }();
  if (!ok) throw ConfigError("head " + to_string(s.head) + " has a non-canonical layout");
}

template <class T>
class Head {
 public:
  Head() = default;
  Head(const std::string& name, HeadSpec spec, int in_features, std::int64_t seed) : spec_(std::move(spec)) {
    check_head_spec(spec_);
    mlp_ = Mlp<T>(name, in_features, spec_.hidden_dims, spec_.output_dim, seed);
    if (mlp_.out_features() != spec_.output_dim || mlp_.hidden_dims() != spec_.hidden_dims) {
      throw ConfigError("head " + to_string(spec_.head) + " built with wrong dimensions");
    }
  }

  /// Logits, or probabilities in (0, 1) for ID_DISC_SIM.
  Var forward(Graph<T>& g, Var x) {
    Var y = mlp_.forward(g, x);
    return spec_.head == HeadKind::kIdDiscSim ? ad::sigmoid(g, y) : y;
  }

  const HeadSpec& spec() const { return spec_; }
  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    mlp_.collect(out);
    return out;
  }

 private:
  HeadSpec spec_;
  Mlp<T> mlp_;
};

/// Generator plus the binary classifier and both discriminators.
template <class T>
class DetectorModel {
 public:
  explicit DetectorModel(const AdversarialConfig& cfg) {
    const GeneratorSpec gspec{cfg.generator, cfg.feature_dim, !cfg.generator_weights.empty()};
    generator_ = make_generator<T>(gspec, cfg.seed, cfg.generator_weights, cfg.image_size);
    const int d = cfg.feature_dim;
    classifier_ = Head<T>("classifier", make_head_spec(HeadKind::kBinaryCls), d, cfg.seed);
    forgery_disc_ = Head<T>("forgery_disc", make_head_spec(HeadKind::kForgeryDisc, cfg.n_methods), d, cfg.seed);
    const bool hard = cfg.identity_mode == IdentityMode::kHardLabel || cfg.identity_mode == IdentityMode::kPseudoLabel;
    identity_disc_ = hard ? Head<T>("identity_disc", make_head_spec(HeadKind::kIdDiscHard, *cfg.n_identities), d, cfg.seed)
                          : Head<T>("identity_disc", make_head_spec(HeadKind::kIdDiscSim), d, cfg.seed);
  }

  DetectorModel(const DetectorModel&) = delete;
  DetectorModel& operator=(const DetectorModel&) = delete;

  FeatureGenerator<T>& generator() { return *generator_; }
  Head<T>& classifier() { return classifier_; }
  Head<T>& forgery_disc() { return forgery_disc_; }
  Head<T>& identity_disc() { return identity_disc_; }

  /// Every parameter in a fixed order; names are unique.
  std::vector<Parameter<T>*> parameters() {
    auto out = generator_->parameters();
    for (auto* head : {&classifier_, &forgery_disc_, &identity_disc_}) {
      auto ps = head->parameters();
      out.insert(out.end(), ps.begin(), ps.end());
    }
    return out;
  }

  /// Parameters that receive updates under `cfg`'s modes.
  std::vector<Parameter<T>*> trainable_parameters(const AdversarialConfig& cfg) {
    auto out = generator_->parameters();
    auto add = [&out](Head<T>& h) {
      auto ps = h.parameters();
      out.insert(out.end(), ps.begin(), ps.end());
    };
    add(classifier_);
    if (cfg.forgery_mode == ForgeryMode::kOn) add(forgery_disc_);
    if (cfg.identity_mode != IdentityMode::kOff) add(identity_disc_);
    return out;
  }

 private:
  std::unique_ptr<FeatureGenerator<T>> generator_;
  Head<T> classifier_;
  Head<T> forgery_disc_;
  Head<T> identity_disc_;
};

}  // namespace advdet::nn
