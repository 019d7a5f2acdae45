#pragma once

#include <cstdint>
#include <random>

namespace dpo {

using Rng = std::mt19937_64;

/// Independent generator for stream `stream` of a master seed (splitmix64
/// finalizer over the pair).
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t stream) {
  std::uint64_t z = master_seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return Rng(z);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace dpo
