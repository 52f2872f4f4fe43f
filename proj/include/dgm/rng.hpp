#pragma once

#include <cstdint>
#include <random>

namespace dgm {

using Rng = std::mt19937_64;

/// splitmix64 finaliser; decorrelates neighbouring seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent generator for (base seed, stream index).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x51ed2701ULL)));
}

}  // namespace dgm
