#pragma once

#include <cstdint>
#include <random>

namespace tarpro {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `stream` of run seed `seed`. Streams never overlap in
/// practice, so generators can be created in any order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x5851f42d4c957f2dULL));
}

// Stream identifiers. Keep stable: changing one changes every result.
enum Stream : std::uint64_t {
  kStreamData = 1,
  kStreamMetric = 2,
  kStreamClassifier = 3,
  kStreamDeepAll = 4,
  kStreamVae = 5,
  kStreamGan = 6,
  kStreamProjection = 7,
  kStreamSplit = 8,
  kStreamDiscriminator = 9,
  kStreamFewShot = 10,
};

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(derive_seed(seed, stream));
}

}  // namespace tarpro
