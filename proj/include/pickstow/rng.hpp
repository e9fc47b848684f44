#pragma once

#include <cstdint>
#include <random>

namespace pickstow {

/// splitmix64 mixing step; used to derive independent child seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child stream seed for (master, tag, index). Streams for distinct tags/indices
/// are decorrelated, so parallel or reordered evaluation stays reproducible.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index = 0) {
  return mix_seed(mix_seed(master ^ mix_seed(tag)) + index);
}

using Rng = std::mt19937_64;

}  // namespace pickstow
