#pragma once

#include <Eigen/Dense>
#include <exception>
#include <vector>

namespace lokilab {

/// Runs fn(i) for i in [0, count) across OpenMP threads. The exception thrown
/// by the lowest failing index is rethrown after the loop, so failures do not
/// depend on scheduling.
template <class Fn>
void parallel_for(int count, Fn&& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < count; ++i) {
    try {
      fn(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Pairwise sum in a fixed order: identical result for any thread count.
inline Eigen::VectorXd tree_sum(std::vector<Eigen::VectorXd> parts) {
  if (parts.empty()) return {};
  for (std::size_t stride = 1; stride < parts.size(); stride *= 2)
    for (std::size_t i = 0; i + stride < parts.size(); i += 2 * stride)
      parts[i] += parts[i + stride];
  return std::move(parts.front());
}

}  // namespace lokilab
