#include "lokilab/rng.hpp"

#include <cmath>
#include <numbers>

#include "lokilab/error.hpp"

namespace lokilab {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kUnsupportedFamily: return "unsupported-family";
    case ErrorCode::kZeroProbabilityAction: return "zero-probability-action";
    case ErrorCode::kDivergedRollout: return "diverged-rollout";
    case ErrorCode::kNotConverged: return "not-converged";
    case ErrorCode::kMissingExpertData: return "missing-expert-data";
    case ErrorCode::kInternal: return "internal";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

CounterRng CounterRng::stream(std::uint64_t seed,
                              std::initializer_list<std::uint64_t> path) {
  std::uint64_t key = mix64(seed ^ 0x6A09E667F3BCC909ULL);
  for (std::uint64_t p : path) key = mix64(key ^ mix64(p + 0x3C6EF372FE94F82BULL));
  return CounterRng(key);
}

CounterRng::result_type CounterRng::operator()() {
  return mix64(key_ + 0x9E3779B97F4A7C15ULL * (++counter_));
}

double CounterRng::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int CounterRng::categorical(std::span<const double> probs) {
  const double u = uniform();
  double acc = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  if (last_positive < 0)
    throw Error(ErrorCode::kInvalidArgument, "categorical: no positive mass");
  // Rounding left u >= total mass.
  return last_positive;
}

int CounterRng::geometric(double p) {
  if (!(p > 0.0 && p <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "geometric: p must lie in (0, 1]");
  if (p == 1.0) return 0;
  double u = uniform();
  while (u <= 0.0) u = uniform();
  return static_cast<int>(std::floor(std::log(u) / std::log1p(-p)));
}

}  // namespace lokilab
