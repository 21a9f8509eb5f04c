#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace fas {

/// splitmix64 finalizer; used for seeding and for deriving independent
/// streams from (seed, stream id) pairs.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// xoshiro256** seeded through splitmix64. All derived distributions are
/// computed here rather than via <random> distributions, whose outputs differ
/// between standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent generator for `stream` under `seed`.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) { return Rng(mix_seed(seed, stream)); }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer in [lo, hi].
  long uniform_int(long lo, long hi);
  bool bernoulli(double p) { return uniform() < p; }
  /// Standard normal via Box-Muller (one draw per call).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace fas
