#pragma once

#include <cstdint>
#include <random>

namespace roer {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent random streams derived from one run seed.
enum class Stream : std::uint64_t {
  kInit = 1,
  kEnv = 2,
  kEvalEnv = 3,
  kActor = 4,
  kBuffer = 5,
  kScheme = 6,
  kBias = 7,
};

// stream_seed = splitmix64(splitmix64(seed) ^ (stream * golden ratio constant)).
constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream) {
  return splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(stream) * 0x9E3779B97F4A7C15ULL));
}

inline Rng make_rng(std::uint64_t seed, Stream stream) { return Rng(derive_seed(seed, stream)); }

// Uniform double in [0, 1) built from the top 53 bits; identical on every
// standard library, unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Uniform integer in [0, n) by rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Standard normal via Box-Muller; deterministic across standard libraries.
double standard_normal(Rng& rng);

}  // namespace roer
