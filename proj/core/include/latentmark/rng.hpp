#pragma once

#include <cstdint>

namespace latentmark {

/// Portable counter-based generator (SplitMix64 finalizer applied to a
/// Weyl sequence). The i-th output is a pure function of (seed, stream, i),
/// so results are identical across platforms and independent of threading.
///
/// Normal variates use Box-Muller; all derived distributions are implemented
/// here rather than via <random>, whose distributions are not portable.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p);
  double normal();

  std::uint64_t counter() const { return counter_; }

  /// SplitMix64 finalizer.
  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace latentmark
