#pragma once

// Counter-based seed derivation. Every random draw in the pipeline comes from
// an engine seeded by hashing a path of integers (and strings) together with
// the master seed, so results do not depend on execution order.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace dmd {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a, used only to fold identifiers into a seed path.
inline std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p));
  return h;
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Engine(derive_seed(master, path));
}

/// Uniform double in [lo, hi) built from raw engine bits (identical across
/// standard library implementations, unlike std::uniform_real_distribution).
inline double uniform(Engine& e, double lo, double hi) {
  const double u = static_cast<double>(e() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline std::uint64_t uniform_index(Engine& e, std::uint64_t n) {
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = e();
  } while (x >= limit);
  return x % n;
}

}  // namespace dmd
