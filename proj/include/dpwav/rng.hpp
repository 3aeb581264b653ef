#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dpwav {

// All randomized components draw from a mt19937_64 stream. Gaussian and
// uniform samples are produced by our own code (not std::*_distribution),
// so a given seed yields the same sequence on every platform.
using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive well-separated stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for a named logical stream, e.g. (run_seed, kStreamClient, round, k).
// Each actor owns its own Rng so results do not depend on scheduling.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t stream,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = mix64(run_seed);
  h = mix64(h ^ stream);
  h = mix64(h ^ a);
  return mix64(h ^ b);
}

enum : std::uint64_t {
  kStreamInit = 1,       // model initialization
  kStreamPartition = 2,  // dataset shuffling/partitioning
  kStreamSampling = 3,   // per-round client sampling
  kStreamClient = 4,     // per-round, per-client local training
  kStreamServerNoise = 5 // per-round aggregation noise
};

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; consumes exactly two draws per sample.
inline double standard_normal(Rng& rng) {
  double u1 = 1.0 - uniform01(rng); // (0, 1]
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

} // namespace dpwav
