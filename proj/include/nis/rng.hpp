#pragma once

#include <cmath>
#include <cstdint>

namespace nis {

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so parallel consumers stay reproducible.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return mix(key_ ^ mix(counter));
  }

  /// Uniform in [0, 1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller over counters (2c, 2c+1).
  double normal(std::uint64_t counter) const {
    const double u1 = 1.0 - uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::uint64_t key_;
};

/// Sequential convenience wrapper around CounterRng.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) : rng_(seed, stream) {}

  double uniform() { return rng_.uniform(next_++); }
  double normal() { return rng_.normal(next_++); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace nis
