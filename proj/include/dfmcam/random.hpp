#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dfmcam {

/// Seeded stream with platform-independent output. std::mt19937_64 is fully
/// specified by the standard, the library distributions are not, so the
/// conversions to real and integer ranges live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream derived from several keys (seed, split, index, ...).
  static Rng derive(std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = 0x9E3779B97F4A7C15ull;
    for (std::uint64_t k : keys) {
      h ^= k + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
      h = splitmix(h);
    }
    return Rng(h);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift; bias below 2^-64 * n is irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace dfmcam
