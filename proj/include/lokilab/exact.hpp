#pragma once

#include <Eigen/Dense>

#include "lokilab/mdp.hpp"
#include "lokilab/policy.hpp"

namespace lokilab {

/// Exact quantities of one stationary policy on a tabular MDP.
struct ExactSolution {
  Eigen::MatrixXd policy;      // S x A action probabilities
  Eigen::MatrixXd q;           // S x A
  Eigen::VectorXd v;           // S
  Eigen::MatrixXd adv;         // S x A, q - v
  Eigen::VectorXd state_dist;  // d(s) = (1 - gamma) sum_t gamma^t d_t(s)
  /// Row t holds (1 - gamma) gamma^t d_t(.), truncated once the remaining mass
  /// gamma^T drops below kJointTailMass.
  Eigen::MatrixXd joint_dist;
  double total_cost = 0.0;     // J = E_{p0}[V]
  double gamma = 0.0;
};

inline constexpr double kJointTailMass = 1e-6;

/// Solves the Bellman evaluation system (I - gamma P_pi) V = c_pi and the
/// flow equation d = (1 - gamma) p0 + gamma P_pi^T d as dense linear systems.
ExactSolution exact_eval(const TabularMdp& mdp, const Eigen::MatrixXd& policy_probs);
ExactSolution exact_eval(const TabularMdp& mdp, const PolicyParams& policy);

/// Expected cost and transition kernel under a policy.
Eigen::VectorXd policy_cost(const TabularMdp& mdp, const Eigen::MatrixXd& policy_probs);
Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const Eigen::MatrixXd& policy_probs);

/// Row-wise E_{a ~ pi_s}[table(s, a)].
Eigen::VectorXd expect_actions(const Eigen::MatrixXd& policy_probs, const Eigen::MatrixXd& table);

struct PerformanceDifference {
  double lhs = 0.0;  // J(pi) - J(pi')
  double rhs = 0.0;  // E_{d_pi} E_pi[A_pi'] / (1 - gamma)
};

PerformanceDifference performance_difference(const TabularMdp& mdp, const Eigen::MatrixXd& pi,
                                             const Eigen::MatrixXd& pi_prime);

/// Optimal values by policy iteration (exact, finite).
struct OptimalSolution {
  Eigen::MatrixXd q;
  Eigen::VectorXd v;
  Eigen::MatrixXd greedy_policy;  // deterministic, lowest-index tie break
  double total_cost = 0.0;
  int iterations = 0;
};

OptimalSolution solve_optimal(const TabularMdp& mdp);

/// Deterministic policy table placing all mass on `actions[s]`.
Eigen::MatrixXd deterministic_policy(int num_actions, const std::vector<int>& actions);

}  // namespace lokilab
