#pragma once

#include <cstdint>
#include <random>

namespace crl {

/// Seeded random source with deterministic, platform-independent draws.
/// Uniform doubles are built from the raw 64-bit output (not from
/// std::uniform_real_distribution) so that a given seed yields the same
/// stream everywhere. `substream(i)` derives an independent source from the
/// original seed; it does not depend on how many draws were made, which keeps
/// batch sampling order-stable under any evaluation order.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed);

  RandomSource substream(std::uint64_t index) const;

  std::uint64_t raw();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  int uniform_int(int n);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// SplitMix64 step; used for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace crl
