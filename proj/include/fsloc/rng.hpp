#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace fsloc {

/// xoshiro256** seeded through splitmix64.
///
/// All randomness in the library flows through this generator. Distinct
/// purposes (data synthesis, splitting, episode sampling, initialization)
/// get independent streams via derive_seed(), so a run is replayable from a
/// single root seed and the streams do not interfere with one another.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next();
  std::uint64_t operator()() { return next(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller, no cached spare so the stream position is
  /// a function of the call count only).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// k distinct indices drawn uniformly from [0, n), in draw order.
  std::vector<std::size_t> choose(std::size_t n, std::size_t k);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Independent child seed for a named purpose.
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

}  // namespace fsloc
