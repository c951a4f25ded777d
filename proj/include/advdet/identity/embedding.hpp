#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "advdet/core/error.hpp"
#include "advdet/core/rng.hpp"
#include "advdet/core/types.hpp"

namespace advdet::identity {

static_assert(std::endian::native == std::endian::little, "cache format assumes a little-endian host");

inline constexpr int kEmbeddingDim = 512;
using Embedding = std::vector<float>;

enum class ProviderId { kArcfaceOnnxFile, kSyntheticFactor, kCacheOnly };

inline std::string to_string(ProviderId p) {
  switch (p) {
    case ProviderId::kArcfaceOnnxFile: return "ARCFACE_ONNX_FILE";
    case ProviderId::kSyntheticFactor: return "SYNTHETIC_FACTOR";
    case ProviderId::kCacheOnly: return "CACHE_ONLY";
  }
  return "?";
}

inline ProviderId parse_provider(const std::string& text) {
  const auto u = upper(text);
  if (u == "ARCFACE_ONNX_FILE" || u == "ARCFACE") return ProviderId::kArcfaceOnnxFile;
  if (u == "SYNTHETIC_FACTOR" || u == "SYNTHETIC") return ProviderId::kSyntheticFactor;
  if (u == "CACHE_ONLY" || u == "CACHE") return ProviderId::kCacheOnly;
  throw ConfigError("unknown embedding provider '" + text + "'");
}

/// Face-recognition embedding source. `embed` is deterministic per image.
class EmbeddingOracle {
 public:
  virtual ~EmbeddingOracle() = default;
  virtual ProviderId provider() const = 0;
  virtual Embedding embed(const SampleRecord& record) = 0;
};

// ---------------------------------------------------------------------------
// Cache: "AEMB" magic, u32 version, then records of
// (u32 key length, key bytes, 512 little-endian f32). Sidecar "<file>.idx"
// holds "offset<TAB>key" lines.

class EmbeddingCache {
 public:
  static constexpr char kMagic[4] = {'A', 'E', 'M', 'B'};
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderSize = 8;
  static constexpr std::size_t kPayload = sizeof(float) * kEmbeddingDim;

  explicit EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) {
      std::ofstream out(path_, std::ios::binary);
      if (!out) throw IoError("cannot create embedding cache " + path_.string());
      out.write(kMagic, 4);
      write_u32(out, kVersion);
      write_sidecar();
    } else {
      open_existing();
    }
  }

  static std::string key_for(ProviderId p, const std::string& image_id) { return to_string(p) + "|" + image_id; }

  std::optional<Embedding> get(ProviderId p, const std::string& image_id) const {
    std::lock_guard lock(mu_);
    const std::string key = key_for(p, image_id);
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    std::ifstream in(path_, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(it->second));
    std::uint32_t len = 0;
    if (!read_u32(in, len) || len != key.size()) throw IntegrityError(key, "index points at a mismatched record");
    std::string stored(len, '\0');
    in.read(stored.data(), len);
    if (!in || stored != key) throw IntegrityError(key, "index points at a mismatched record");
    Embedding v(kEmbeddingDim);
    in.read(reinterpret_cast<char*>(v.data()), kPayload);
    if (in.gcount() != static_cast<std::streamsize>(kPayload)) throw IntegrityError(key, "truncated vector");
    return v;
  }

  void put(ProviderId p, const std::string& image_id, std::span<const float> v) {
    if (v.size() != static_cast<std::size_t>(kEmbeddingDim)) {
      throw EmbeddingError(ExitCode::kData, "embedding for '" + image_id + "' has dimension " +
                                                std::to_string(v.size()) + ", expected 512");
    }
    std::lock_guard lock(mu_);
    const std::string key = key_for(p, image_id);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to embedding cache " + path_.string());
    const std::uint64_t offset = end_;
    write_u32(out, static_cast<std::uint32_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    out.write(reinterpret_cast<const char*>(v.data()), kPayload);
    if (!out) throw IoError("write failed for embedding cache " + path_.string());
    out.close();
    end_ += 4 + key.size() + kPayload;
    index_[key] = offset;  // later entries shadow earlier ones
    std::ofstream idx(sidecar_path(), std::ios::app);
    idx << offset << '\t' << key << '\n';
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return index_.size();
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path sidecar_path() const { return path_.string() + ".idx"; }

 private:
  static void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
  static bool read_u32(std::istream& in, std::uint32_t& v) {
    in.read(reinterpret_cast<char*>(&v), 4);
    return in.gcount() == 4;
  }

  void open_existing() {
    const auto file_size = std::filesystem::file_size(path_);
    std::ifstream in(path_, std::ios::binary);
    char magic[4] = {};
    in.read(magic, 4);
    std::uint32_t version = 0;
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0 || !read_u32(in, version)) {
      throw IntegrityError("<header>", "not an embedding cache file: " + path_.string());
    }
    if (version != kVersion) throw IntegrityError("<header>", "unsupported cache version " + std::to_string(version));
    end_ = file_size;
    if (load_sidecar(file_size)) return;
    scan(in, file_size);
    write_sidecar();
  }

  bool load_sidecar(std::uintmax_t file_size) {
    std::ifstream idx(sidecar_path());
    if (!idx) return false;
    std::unordered_map<std::string, std::uint64_t> loaded;
    std::uint64_t expected_end = kHeaderSize;
    std::string line;
    while (std::getline(idx, line)) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) return false;
      std::uint64_t off = 0;
      try {
        off = std::stoull(line.substr(0, tab));
      } catch (const std::exception&) {
        return false;
      }
      const std::string key = line.substr(tab + 1);
      if (off != expected_end) return false;
      loaded[key] = off;
      expected_end = off + 4 + key.size() + kPayload;
    }
    if (expected_end != file_size) return false;
    index_ = std::move(loaded);
    return true;
  }

  void scan(std::ifstream& in, std::uintmax_t file_size) {
    index_.clear();
    std::uint64_t offset = kHeaderSize;
    in.seekg(static_cast<std::streamoff>(offset));
    while (offset < file_size) {
      std::uint32_t len = 0;
      if (!read_u32(in, len) || offset + 4 + len > file_size) {
        throw IntegrityError("<record@" + std::to_string(offset) + ">", "truncated key");
      }
      std::string key(len, '\0');
      in.read(key.data(), len);
      if (offset + 4 + len + kPayload > file_size) throw IntegrityError(key, "truncated vector");
      in.seekg(static_cast<std::streamoff>(kPayload), std::ios::cur);
      index_[key] = offset;
      offset += 4 + len + kPayload;
    }
  }

  void write_sidecar() const {
    std::vector<std::pair<std::uint64_t, std::string>> entries;
    for (const auto& [k, off] : index_) entries.emplace_back(off, k);
    std::sort(entries.begin(), entries.end());
    std::ofstream idx(sidecar_path(), std::ios::trunc);
    // Shadowed duplicates are not listed, so a rewritten sidecar may not tile the
    // file; the next open then falls back to a scan, which is always correct.
    for (const auto& [off, k] : entries) idx << off << '\t' << k << '\n';
  }

  std::filesystem::path path_;
  std::unordered_map<std::string, std::uint64_t> index_;
  std::uint64_t end_ = kHeaderSize;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Providers

/// Unit vector per identity plus per-image noise of norm 0.05.
class SyntheticFactorOracle final : public EmbeddingOracle {
 public:
  explicit SyntheticFactorOracle(std::int64_t seed, double noise_norm = 0.05) : seed_(seed), noise_norm_(noise_norm) {}

  ProviderId provider() const override { return ProviderId::kSyntheticFactor; }

  Embedding embed(const SampleRecord& r) override {
    if (!r.identity_label) {
      throw EmbeddingError(ExitCode::kData, "SYNTHETIC_FACTOR needs an identity label for '" + r.image_path + "'");
    }
    Embedding base = random_direction("oracle/identity/" + std::to_string(*r.identity_label), 1.0);
    const Embedding noise = random_direction("oracle/image/" + r.image_path, noise_norm_);
    for (int i = 0; i < kEmbeddingDim; ++i) base[i] += noise[i];
    return base;
  }

 private:
  Embedding random_direction(const std::string& component, double norm) const {
    Rng rng = make_rng(seed_, component);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(kEmbeddingDim);
    double ss = 0.0;
    for (auto& x : v) {
      x = dist(rng);
      ss += x * x;
    }
    const double scale = norm / std::sqrt(ss);
    Embedding out(kEmbeddingDim);
    for (int i = 0; i < kEmbeddingDim; ++i) out[i] = static_cast<float>(v[i] * scale);
    return out;
  }

  std::int64_t seed_;
  double noise_norm_;
};

/// Serves embeddings precomputed by `source` into a cache; a miss is an error.
class CacheOnlyOracle final : public EmbeddingOracle {
 public:
  CacheOnlyOracle(std::shared_ptr<EmbeddingCache> cache, ProviderId source)
      : cache_(std::move(cache)), source_(source) {}

  ProviderId provider() const override { return ProviderId::kCacheOnly; }

  Embedding embed(const SampleRecord& r) override {
    auto v = cache_->get(source_, r.image_path);
    if (!v) {
      throw EmbeddingError(ExitCode::kData, "no cached " + to_string(source_) + " embedding for image '" +
                                                r.image_path + "' in " + cache_->path().string());
    }
    return *v;
  }

 private:
  std::shared_ptr<EmbeddingCache> cache_;
  ProviderId source_;
};

/// Fetches through the cache and fills it on a miss.
class CachedOracle final : public EmbeddingOracle {
 public:
  CachedOracle(std::shared_ptr<EmbeddingOracle> inner, std::shared_ptr<EmbeddingCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  ProviderId provider() const override { return inner_->provider(); }

  Embedding embed(const SampleRecord& r) override {
    if (auto v = cache_->get(inner_->provider(), r.image_path)) return *v;
    Embedding v = inner_->embed(r);
    cache_->put(inner_->provider(), r.image_path, v);
    return v;
  }

 private:
  std::shared_ptr<EmbeddingOracle> inner_;
  std::shared_ptr<EmbeddingCache> cache_;
};

/// Runner for serialized recognition models (112x112 aligned faces -> 512-d).
/// No inference runtime ships with the framework; hosts register one here.
struct ArcfaceRuntime {
  using Factory = std::function<std::shared_ptr<EmbeddingOracle>(const std::filesystem::path&)>;
  static Factory& factory() {
    static Factory f;
    return f;
  }
};

struct OracleOptions {
  ProviderId provider = ProviderId::kCacheOnly;
  std::filesystem::path cache_path;     // cache file (CACHE_ONLY reads, others fill)
  ProviderId cache_source = ProviderId::kSyntheticFactor;
  std::filesystem::path model_path;     // ARCFACE_ONNX_FILE
  std::int64_t seed = 0;                // SYNTHETIC_FACTOR
};

inline std::shared_ptr<EmbeddingOracle> make_oracle(const OracleOptions& opt) {
  std::shared_ptr<EmbeddingCache> cache;
  if (!opt.cache_path.empty()) {
    if (opt.provider == ProviderId::kCacheOnly && !std::filesystem::exists(opt.cache_path)) {
      throw EmbeddingError(ExitCode::kData, "CACHE_ONLY provider: cache file " + opt.cache_path.string() + " not found");
    }
    cache = std::make_shared<EmbeddingCache>(opt.cache_path);
  }
  std::shared_ptr<EmbeddingOracle> base;
  switch (opt.provider) {
    case ProviderId::kCacheOnly:
      if (!cache) throw ConfigError("CACHE_ONLY provider needs a cache file");
      return std::make_shared<CacheOnlyOracle>(cache, opt.cache_source);
    case ProviderId::kSyntheticFactor:
      base = std::make_shared<SyntheticFactorOracle>(opt.seed);
      break;
    case ProviderId::kArcfaceOnnxFile:
      if (!ArcfaceRuntime::factory()) {
        throw EmbeddingError(ExitCode::kUsage,
                             "ARCFACE_ONNX_FILE provider: no inference runtime registered in this build; precompute "
                             "embeddings into a cache file and use CACHE_ONLY");
      }
      base = ArcfaceRuntime::factory()(opt.model_path);
      break;
  }
  return cache ? std::make_shared<CachedOracle>(base, cache) : base;
}

}  // namespace advdet::identity
