#pragma once

#include <cstdint>
#include <string_view>

namespace sotkit {

// Counter-based generator: draw n of stream s under key k is
// SplitMix64-finalize(k, s, n). Any draw can be recomputed from
// (key, stream, counter) alone, so runs are reproducible from the seed.
class CounterRng {
 public:
  static constexpr std::string_view kName = "splitmix64-counter";

  explicit CounterRng(uint64_t key, uint64_t stream = 0)
      : key_(key), stream_(stream) {}

  uint64_t NextU64();
  // Uniform in [0, 1) with 53 random bits.
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  uint64_t Below(uint64_t n);
  // Standard normal (Box-Muller, one draw per call).
  double Normal();

  uint64_t counter() const { return counter_; }

 private:
  uint64_t key_;
  uint64_t stream_;
  uint64_t counter_ = 0;
};

}  // namespace sotkit
