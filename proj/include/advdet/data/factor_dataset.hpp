#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "advdet/core/error.hpp"
#include "advdet/core/rng.hpp"
#include "advdet/core/types.hpp"
#include "advdet/data/image.hpp"
#include "advdet/data/manifest.hpp"
#include "advdet/identity/embedding.hpp"

namespace advdet {

/// Synthetic corpus with known generative factors: identity sets a base pattern,
/// each forgery method adds its own artifact family, frames differ by noise only.
struct FactorDatasetSpec {
  int n_identities = 8;
  int n_methods = 4;
  int images_per_combo = 5;  // videos per (identity, real/method) combination
  int image_size = 32;
  int frames_per_video = 8;
  std::int64_t seed = 0;
  double artifact_amplitude = 0.25;
  double frame_noise = 0.02;
};

inline void check_factor_spec(const FactorDatasetSpec& s) {
  if (s.n_identities < 1) throw ConfigError("n_identities must be positive");
  if (s.n_methods < 1 || s.n_methods > 4) throw ConfigError("n_methods must be in [1, 4] (one artifact family each)");
  if (s.images_per_combo < 1) throw ConfigError("images_per_combo must be positive");
  if (s.image_size < 16) throw ConfigError("image_size must be at least 16");
  if (s.frames_per_video < 1) throw ConfigError("frames_per_video must be positive");
}

/// Video index v of images_per_combo goes to TRAIN/VAL/TEST in a 3:1:1 pattern.
inline Split factor_split(int video_index, int images_per_combo) {
  if (images_per_combo < 3) return video_index == 0 ? Split::kTrain : (video_index == 1 ? Split::kVal : Split::kTest);
  const int n_test = std::max(1, images_per_combo / 5);
  const int n_val = std::max(1, images_per_combo / 5);
  if (video_index >= images_per_combo - n_test) return Split::kTest;
  if (video_index >= images_per_combo - n_test - n_val) return Split::kVal;
  return Split::kTrain;
}

namespace detail {

struct IdentityLook {
  std::array<float, 3> c1, c2, blob;
  double theta, freq;
  double blob_cx, blob_cy, blob_r;
};

struct VideoJitter {
  double phase, brightness, dx, dy, gain;
};

inline IdentityLook identity_look(std::int64_t seed, int id) {
  Rng rng = make_rng(seed, "factor/identity/" + std::to_string(id));
  std::uniform_real_distribution<double> col(0.15, 0.85), ang(0.0, std::numbers::pi), fr(1.5, 4.0), pos(0.35, 0.65),
      rad(0.18, 0.28);
  IdentityLook l{};
  for (auto* c : {&l.c1, &l.c2, &l.blob}) {
    for (auto& v : *c) v = static_cast<float>(col(rng));
  }
  l.theta = ang(rng);
  l.freq = fr(rng);
  l.blob_cx = pos(rng);
  l.blob_cy = pos(rng);
  l.blob_r = rad(rng);
  return l;
}

inline VideoJitter video_jitter(std::int64_t seed, const std::string& video_id) {
  Rng rng = make_rng(seed, "factor/video/" + video_id);
  std::uniform_real_distribution<double> ph(-0.4, 0.4), br(-0.04, 0.04), sh(-0.03, 0.03), g(0.8, 1.2);
  return {ph(rng), br(rng), sh(rng), sh(rng), g(rng)};
}

inline Image render_base(const IdentityLook& l, const VideoJitter& j, int s) {
  Image img(s, s, 3);
  const double ct = std::cos(l.theta), st = std::sin(l.theta);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double u = (x + 0.5) / s, v = (y + 0.5) / s;
      const double t = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * l.freq * (u * ct + v * st) + j.phase);
      const double bx = (u - l.blob_cx - j.dx) / l.blob_r, by = (v - l.blob_cy - j.dy) / (0.8 * l.blob_r);
      const double inside = 1.0 / (1.0 + std::exp(12.0 * (bx * bx + by * by - 1.0)));
      for (int c = 0; c < 3; ++c) {
        const double bg = (1 - t) * l.c1[c] + t * l.c2[c];
        img.at(y, x, c) = static_cast<float>((1 - inside) * bg + inside * l.blob[c] + j.brightness);
      }
    }
  }
  return img;
}

/// Method artifact families: 0 grid overlay, 1 blur band, 2 colour shift, 3 checker corner.
inline void apply_artifact(Image& img, int method, double amp) {
  const int s = img.width;
  switch (method) {
    case 0:
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          if (y % 4 == 1 || x % 4 == 1) {
            for (int c = 0; c < 3; ++c) img.at(y, x, c) += static_cast<float>(amp);
          }
        }
      }
      break;
    case 1: {
      const int y0 = s * 5 / 16, y1 = s * 11 / 16;
      const Image src = img;
      for (int y = y0; y < y1; ++y) {
        for (int x = 0; x < s; ++x) {
          for (int c = 0; c < 3; ++c) {
            double acc = 0;
            int n = 0;
            for (int dx = -2; dx <= 2; ++dx) {
              const int xx = std::clamp(x + dx, 0, s - 1);
              acc += src.at(y, xx, c);
              ++n;
            }
            img.at(y, x, c) = static_cast<float>(acc / n - 0.5 * amp);
          }
        }
      }
      break;
    }
    case 2: {
      const int a = s / 4, b = s - s / 4;
      for (int y = a; y < b; ++y) {
        for (int x = a; x < b; ++x) {
          img.at(y, x, 0) += static_cast<float>(amp);
          img.at(y, x, 2) -= static_cast<float>(amp);
        }
      }
      break;
    }
    case 3: {
      const int e = s * 5 / 16;
      for (int y = 0; y < e; ++y) {
        for (int x = 0; x < e; ++x) {
          const float d = static_cast<float>(((x + y) % 2 == 0) ? amp : -amp);
          for (int c = 0; c < 3; ++c) img.at(y, x, c) += d;
        }
      }
      break;
    }
    default: throw ContractViolation("unknown artifact family " + std::to_string(method));
  }
}

}  // namespace detail

struct FactorDataset {
  std::vector<SampleRecord> records;
  std::filesystem::path manifest_path;
  std::filesystem::path embeddings_path;
};

/// Records in generation order: identity, then REAL before methods, then video, then frame.
inline std::vector<SampleRecord> factor_records(const FactorDatasetSpec& spec) {
  check_factor_spec(spec);
  std::vector<SampleRecord> out;
  for (int id = 0; id < spec.n_identities; ++id) {
    for (int kind = -1; kind < spec.n_methods; ++kind) {
      for (int v = 0; v < spec.images_per_combo; ++v) {
        const std::string video = "id" + std::to_string(id) + (kind < 0 ? "_real" : "_m" + std::to_string(kind)) +
                                  "_v" + std::to_string(v);
        for (int f = 0; f < spec.frames_per_video; ++f) {
          SampleRecord r;
          r.image_path = "images/" + video + "_f" + std::to_string(f) + ".ppm";
          r.binary_label = kind < 0 ? BinaryLabel::kReal : BinaryLabel::kFake;
          if (kind >= 0) r.method_label = kind;
          r.identity_label = id;
          r.video_id = video;
          r.split = factor_split(v, spec.images_per_combo);
          out.push_back(std::move(r));
        }
      }
    }
  }
  return out;
}

/// Pixels of one record, in [0, 1].
inline Image render_factor_image(const FactorDatasetSpec& spec, const SampleRecord& r) {
  const auto look = detail::identity_look(spec.seed, *r.identity_label);
  const auto jit = detail::video_jitter(spec.seed, r.video_id);
  Image img = detail::render_base(look, jit, spec.image_size);
  Rng rng = make_rng(spec.seed, "factor/frame/" + r.image_path);
  std::normal_distribution<double> noise(0.0, spec.frame_noise);
  for (auto& p : img.data) p += static_cast<float>(noise(rng));
  if (r.method_label) detail::apply_artifact(img, *r.method_label, spec.artifact_amplitude * jit.gain);
  for (auto& p : img.data) p = std::clamp(p, 0.0f, 1.0f);
  return img;
}

/// Writes images/, manifest.jsonl and embeddings.bin (SYNTHETIC_FACTOR vectors) under out_dir.
inline FactorDataset generate_factor_dataset(const FactorDatasetSpec& spec, const std::filesystem::path& out_dir) {
  check_factor_spec(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  FactorDataset ds;
  ds.records = factor_records(spec);
  for (const auto& r : ds.records) write_ppm(out_dir / r.image_path, render_factor_image(spec, r));
  ds.manifest_path = out_dir / "manifest.jsonl";
  write_manifest(ds.manifest_path, ds.records);

  ds.embeddings_path = out_dir / "embeddings.bin";
  std::filesystem::remove(ds.embeddings_path, ec);
  std::filesystem::remove(ds.embeddings_path.string() + ".idx", ec);
  identity::EmbeddingCache cache(ds.embeddings_path);
  identity::SyntheticFactorOracle oracle(spec.seed);
  for (const auto& r : ds.records) cache.put(oracle.provider(), r.image_path, oracle.embed(r));
  return ds;
}

}  // namespace advdet
