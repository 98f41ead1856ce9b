#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace stablab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Named substream identifiers, so that e.g. line directions and B0 samples
/// drawn from the same user seed never share state.
enum class Stream : std::uint64_t {
  Sampling = 1,
  Birkhoff = 2,
  Lines = 3,
  BallSamples = 4,
  Starts = 5,
  MonteCarlo = 6,
  Jitter = 7,
  Seed = 8,
  PhaseBalls = 9,
};

/// mt19937_64 with hand-rolled conversions: the engine output is fixed by the
/// standard, the library distributions are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}
  Rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0)
      : eng_(splitmix64(splitmix64(seed ^ (static_cast<std::uint64_t>(stream) << 56)) + index)) {}

  std::uint64_t next() { return eng_(); }
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  std::uint64_t below(std::uint64_t n) {
    // Lemire-free rejection: exact uniformity is cheap at these sizes.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do x = eng_(); while (x >= limit);
    return x % n;
  }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace stablab
