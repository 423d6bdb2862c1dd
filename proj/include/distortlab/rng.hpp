#pragma once

#include <cstdint>
#include <random>

namespace distortlab {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014): a bijective avalanche mix.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Per-sample seed: splitmix64(master ^ splitmix64(index)). Independent of
/// scheduling, so sample i sees the same stream at any job count.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(master ^ splitmix64(index));
}

inline constexpr std::uint64_t kDefaultSeed = 20250101;

/// Uniform variates from std::mt19937_64, whose output sequence is fixed by
/// the standard. Doubles take the top 53 bits, so u lies in [0, 1).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::uint64_t next_u64() noexcept { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace distortlab
