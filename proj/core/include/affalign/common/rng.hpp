#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace affalign {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent generator seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Named, counter-addressed substream of a root seed. The same
// (seed, name, counters) always yields the same generator, so consumers of
// one stream never shift the draws seen by another.
inline Rng substream(std::uint64_t seed, std::string_view name,
                     std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = mix64(seed ^ mix64(hash_name(name)));
  s = mix64(s ^ mix64(a + 0x1234567ULL));
  s = mix64(s ^ mix64(b + 0x89abcdefULL));
  return Rng(s);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace affalign
