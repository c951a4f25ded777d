#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "advdet/autodiff/graph.hpp"
#include "advdet/core/error.hpp"
#include "advdet/nn/adam.hpp"
#include "advdet/train/state.hpp"

namespace advdet::train {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'A', 'D', 'V', 'D', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <class V>
  void pod(const V& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <class T>
  void matrix(const ad::Matrix<T>& m) {
    pod(static_cast<std::uint32_t>(m.rows()));
    pod(static_cast<std::uint32_t>(m.cols()));
    out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}
  template <class V>
  V pod(const char* what) {
    V v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (in_.gcount() != static_cast<std::streamsize>(sizeof v)) throw IntegrityError(file_, std::string("truncated at ") + what);
    return v;
  }
  std::string str(const char* what) {
    const auto n = pod<std::uint32_t>(what);
    if (n > (1u << 20)) throw IntegrityError(file_, std::string("implausible string length at ") + what);
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (in_.gcount() != static_cast<std::streamsize>(n)) throw IntegrityError(file_, std::string("truncated at ") + what);
    return s;
  }
  template <class T>
  ad::Matrix<T> matrix(const std::string& what) {
    const auto r = pod<std::uint32_t>(what.c_str());
    const auto c = pod<std::uint32_t>(what.c_str());
    ad::Matrix<T> m(r, c);
    const auto bytes = static_cast<std::streamsize>(m.size() * sizeof(T));
    in_.read(reinterpret_cast<char*>(m.data()), bytes);
    if (in_.gcount() != bytes) throw IntegrityError(file_, "truncated tensor " + what);
    return m;
  }

 private:
  std::istream& in_;
  std::string file_;
};

}  // namespace detail

/// Everything needed to continue a run bit-identically.
template <class T>
struct Checkpoint {
  std::string config_hash;
  TrainState state;
  std::map<std::string, ad::Matrix<T>> params;
  std::int64_t adam_steps = 0;
  std::map<std::string, typename nn::Adam<T>::Moments> moments;
};

/// Writes via a temporary file and rename so a crash never leaves a torn checkpoint.
template <class T>
void save_checkpoint(const std::filesystem::path& path, const std::string& config_hash, const TrainState& state,
                     const std::vector<ad::Parameter<T>*>& params, nn::Adam<T>& adam) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    detail::Writer w(out);
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    w.pod(kCheckpointVersion);
    w.pod(static_cast<std::uint32_t>(sizeof(T)));
    w.str(config_hash);
    w.pod(state.iteration);
    w.pod(state.ramp.current_iters);
    w.pod(state.ramp.total_iters);
    w.pod(state.ramp.gamma);
    w.pod(state.best_val_metric);
    w.pod(static_cast<std::int32_t>(state.checks_since_improvement));
    w.pod(static_cast<std::int32_t>(state.n_checks));
    w.str(serialize_rng(state.rng));
    w.pod(static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
      w.str(p->name);
      w.matrix(p->value);
    }
    w.pod(adam.steps());
    const auto& ap = adam.params();
    w.pod(static_cast<std::uint32_t>(ap.size()));
    for (std::size_t i = 0; i < ap.size(); ++i) {
      w.str(ap[i]->name);
      w.matrix(adam.moments()[i].m);
      w.matrix(adam.moments()[i].v);
    }
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

template <class T>
Checkpoint<T> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  detail::Reader r(in, path.string());
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (in.gcount() != sizeof magic || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw IntegrityError(path.string(), "not a checkpoint file");
  }
  if (r.pod<std::uint32_t>("version") != kCheckpointVersion) throw IntegrityError(path.string(), "unsupported version");
  if (r.pod<std::uint32_t>("scalar size") != sizeof(T)) throw IntegrityError(path.string(), "scalar type mismatch");
  Checkpoint<T> c;
  c.config_hash = r.str("config hash");
  c.state.iteration = r.pod<std::int64_t>("iteration");
  c.state.ramp.current_iters = r.pod<std::int64_t>("ramp");
  c.state.ramp.total_iters = r.pod<std::int64_t>("ramp");
  c.state.ramp.gamma = r.pod<double>("ramp");
  c.state.best_val_metric = r.pod<double>("best metric");
  c.state.checks_since_improvement = r.pod<std::int32_t>("counter");
  c.state.n_checks = r.pod<std::int32_t>("checks");
  c.state.rng = deserialize_rng(r.str("rng"));
  const auto n = r.pod<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = r.str("parameter name");
    c.params.emplace(name, r.matrix<T>(name));
  }
  c.adam_steps = r.pod<std::int64_t>("optimizer steps");
  const auto k = r.pod<std::uint32_t>("moment count");
  for (std::uint32_t i = 0; i < k; ++i) {
    auto name = r.str("moment name");
    auto m = r.matrix<T>(name + ".m");
    auto v = r.matrix<T>(name + ".v");
    c.moments.emplace(name, typename nn::Adam<T>::Moments{std::move(m), std::move(v)});
  }
  return c;
}

/// Copies stored values into `params`; every parameter must be present with its shape.
template <class T>
void restore_parameters(const Checkpoint<T>& c, const std::vector<ad::Parameter<T>*>& params, const std::string& file) {
  for (auto* p : params) {
    auto it = c.params.find(p->name);
    if (it == c.params.end()) throw IntegrityError(p->name, "parameter missing from checkpoint " + file);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw IntegrityError(p->name, "shape mismatch in checkpoint " + file);
    }
    p->value = it->second;
  }
}

template <class T>
void restore_optimizer(const Checkpoint<T>& c, nn::Adam<T>& adam, const std::string& file) {
  const auto& ps = adam.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto it = c.moments.find(ps[i]->name);
    if (it == c.moments.end()) throw IntegrityError(ps[i]->name, "optimizer moments missing from checkpoint " + file);
    adam.moments()[i] = it->second;
  }
  adam.set_steps(c.adam_steps);
}

}  // namespace advdet::train
