#include "crl/rng.hpp"

#include <stdexcept>

namespace crl {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RandomSource::RandomSource(std::uint64_t seed) : seed_(seed), engine_(seed) {}

RandomSource RandomSource::substream(std::uint64_t index) const {
  // Mix the stream index into the base seed; independent of draw position.
  return RandomSource(splitmix64(seed_ ^ splitmix64(index + 0x9E3779B97F4A7C15ull)));
}

std::uint64_t RandomSource::raw() { return engine_(); }

double RandomSource::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomSource::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

int RandomSource::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  // 53-bit uniform scaled; bias is negligible for the small n used here.
  int v = static_cast<int>(uniform() * n);
  return v < n ? v : n - 1;
}

}  // namespace crl
