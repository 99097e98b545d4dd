#pragma once

#include <cstdint>

namespace pixprop {

// Name recorded in manifests so datasets can be regenerated elsewhere.
inline constexpr const char* kRngAlgorithm = "splitmix64-counter";

// Counter-based 64-bit generator: the i-th output is a pure function of
// (key, i), so streams are reproducible across platforms and schedules.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (no cached second value).
  double gaussian();

  std::uint64_t counter() const { return counter_; }

  // Independent sub-stream key for (key, stream).
  static std::uint64_t derive(std::uint64_t key, std::uint64_t stream);

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace pixprop
