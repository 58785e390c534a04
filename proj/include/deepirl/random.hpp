#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace deepirl {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; mixes a base seed with stream tags so every
/// consumer of randomness gets an independent, reproducible stream.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t index = 0) {
  return mix_seed(mix_seed(mix_seed(base) ^ tag) ^ index);
}

// Stream tags.
inline constexpr std::uint64_t kSeedWorld = 0x11;
inline constexpr std::uint64_t kSeedScan = 0x22;
inline constexpr std::uint64_t kSeedDemo = 0x33;
inline constexpr std::uint64_t kSeedSplit = 0x44;
inline constexpr std::uint64_t kSeedInit = 0x55;
inline constexpr std::uint64_t kSeedShuffle = 0x66;
inline constexpr std::uint64_t kSeedEval = 0x77;
inline constexpr std::uint64_t kSeedCollision = 0x88;

/// Uniform double in [0,1) built from the raw engine output, so sampled
/// values do not depend on the standard library's distribution code.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace deepirl

namespace deepirl {

/// Standard normal via Box-Muller on uniform01.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace deepirl
