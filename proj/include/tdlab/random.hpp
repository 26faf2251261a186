#pragma once

#include <cstdint>
#include <random>

namespace tdlab {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent child seeds from one run seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

// Named streams so that every consumer of randomness is decoupled from the others.
enum class SeedStream : std::uint64_t {
  items = 1,
  init = 2,
  explore = 3,
  replay = 4,
  episodes = 5,
  eval = 6,
};

constexpr std::uint64_t derive_seed(std::uint64_t base, SeedStream stream) {
  return derive_seed(base, static_cast<std::uint64_t>(stream));
}

}  // namespace tdlab
