#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>

namespace lokilab {

/// Counter-based generator: output i of a stream is a pure function of
/// (key, i), so any partition of work over threads reproduces the same draws
/// as long as each unit of work owns its stream.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) : key_(key) {}

  /// Stream keyed by a seed and a path of integers (worker, iteration, ...).
  static CounterRng stream(std::uint64_t seed,
                           std::initializer_list<std::uint64_t> path);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal (Box-Muller, one output per call).
  double normal();
  /// Index drawn from a probability vector by inverse CDF.
  int categorical(std::span<const double> probs);
  /// Number of failures before the first success, success probability p.
  int geometric(double p);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace lokilab
