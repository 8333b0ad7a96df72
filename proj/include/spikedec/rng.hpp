#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace spikedec {

/// xoshiro256** seeded through splitmix64. Distributions are implemented here
/// rather than taken from <random> so a seed gives the same stream on every
/// platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  /// Poisson draw by sequential inversion; intended for the small per-bin means of spike trains.
  std::uint32_t poisson(double mean);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace spikedec
