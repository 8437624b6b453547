#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lokilab/mdp.hpp"
#include "lokilab/policy.hpp"

namespace testutil {

inline Eigen::MatrixXd random_probs(int S, int A, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd p(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) p(s, a) = u(gen);
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(gen);
  return v;
}

inline lokilab::PolicyParams random_tabular(int S, int A, std::mt19937_64& gen, double scale = 1.0) {
  lokilab::PolicyParams p = lokilab::PolicyParams::tabular(S, A);
  p.theta = random_vector(S * A, gen, scale);
  return p;
}

/// Central differences of f at x with step h.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

/// Policy value by value iteration on the evaluation operator; independent of
/// the linear solve in exact_eval.
inline Eigen::VectorXd iterate_value(const lokilab::TabularMdp& mdp, const Eigen::MatrixXd& pi,
                                     int sweeps = 5000) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.num_states);
  for (int k = 0; k < sweeps; ++k) {
    Eigen::VectorXd next(mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s) {
      double total = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a)
        total += pi(s, a) * (mdp.cost(s, a) + mdp.gamma * mdp.transition.row(mdp.row(s, a)).dot(v));
      next(s) = total;
    }
    v = next;
  }
  return v;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0) / static_cast<double>(xs.size()));
  return out;
}

/// Per-coordinate mean and standard error over a list of vectors.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> vector_mean_se(const std::vector<Eigen::VectorXd>& xs) {
  const double n = static_cast<double>(xs.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(xs.front().size());
  for (const auto& x : xs) mean += x;
  mean /= n;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(mean.size());
  for (const auto& x : xs) var += (x - mean).cwiseAbs2();
  var /= (n - 1.0);
  return {mean, (var / n).cwiseSqrt()};
}

}  // namespace testutil
