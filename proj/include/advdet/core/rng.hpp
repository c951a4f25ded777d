#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace advdet {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for one named component. Streams of different components are independent,
/// so adding a component never changes the draws of another.
inline constexpr std::uint64_t derive_seed(std::int64_t seed, std::string_view component) noexcept {
  return splitmix64(static_cast<std::uint64_t>(seed) ^ splitmix64(fnv1a64(component)));
}

inline Rng make_rng(std::int64_t seed, std::string_view component) {
  return Rng(derive_seed(seed, component));
}

inline std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng deserialize_rng(const std::string& text) {
  Rng rng;
  std::istringstream is(text);
  is >> rng;
  return rng;
}

}  // namespace advdet
