#pragma once

#include <cstdint>
#include <span>

namespace gcmc {

/// Deterministic pseudo-random generator: xoshiro256** (Blackman & Vigna),
/// with the 256-bit state expanded from a 64-bit seed by SplitMix64.
///
/// Every random decision in the library (initialization, dropout masks,
/// shuffles, splits) is drawn from this generator so that results depend only
/// on the seed, never on the platform's standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// True with probability p.
  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates shuffle (descending swap order).
  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

}  // namespace gcmc
