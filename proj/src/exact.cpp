#include "lokilab/exact.hpp"

#include <cmath>

#include <fmt/format.h>

#include "lokilab/error.hpp"

namespace lokilab {
namespace {

void check_policy_shape(const TabularMdp& mdp, const Eigen::MatrixXd& probs) {
  if (probs.rows() != mdp.num_states || probs.cols() != mdp.num_actions)
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("policy is {}x{}, MDP needs {}x{}", probs.rows(), probs.cols(),
                            mdp.num_states, mdp.num_actions));
}

Eigen::VectorXd solve_checked(const Eigen::MatrixXd& system, const Eigen::VectorXd& rhs,
                              const char* what) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  Eigen::VectorXd x = lu.solve(rhs);
  if (!x.allFinite())
    throw Error(ErrorCode::kInternal, fmt::format("{}: singular evaluation system", what));
  return x;
}

}  // namespace

Eigen::VectorXd policy_cost(const TabularMdp& mdp, const Eigen::MatrixXd& policy_probs) {
  return mdp.cost.cwiseProduct(policy_probs).rowwise().sum();
}

Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const Eigen::MatrixXd& policy_probs) {
  const int S = mdp.num_states;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      if (policy_probs(s, a) != 0.0) P.row(s) += policy_probs(s, a) * mdp.transition.row(mdp.row(s, a));
  return P;
}

Eigen::VectorXd expect_actions(const Eigen::MatrixXd& policy_probs, const Eigen::MatrixXd& table) {
  return policy_probs.cwiseProduct(table).rowwise().sum();
}

ExactSolution exact_eval(const TabularMdp& mdp, const Eigen::MatrixXd& policy_probs) {
  check_policy_shape(mdp, policy_probs);
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  const double gamma = mdp.gamma;

  const Eigen::MatrixXd P = policy_transition(mdp, policy_probs);
  const Eigen::VectorXd c = policy_cost(mdp, policy_probs);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(S, S);

  ExactSolution sol;
  sol.policy = policy_probs;
  sol.gamma = gamma;
  sol.v = solve_checked(I - gamma * P, c, "value");
  const Eigen::VectorXd next_v = mdp.transition * sol.v;  // (S*A)
  sol.q.resize(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) sol.q(s, a) = mdp.cost(s, a) + gamma * next_v(mdp.row(s, a));
  sol.adv = sol.q.colwise() - sol.v;
  sol.state_dist = solve_checked(I - gamma * P.transpose(), (1.0 - gamma) * mdp.initial_dist,
                                 "state distribution");
  sol.total_cost = mdp.initial_dist.dot(sol.v);

  int horizon = 1;
  if (gamma > 0.0) horizon = std::max(1, static_cast<int>(std::ceil(std::log(kJointTailMass) / std::log(gamma))));
  sol.joint_dist.resize(horizon, S);
  Eigen::VectorXd dt = mdp.initial_dist;
  double weight = 1.0 - gamma;
  for (int t = 0; t < horizon; ++t) {
    sol.joint_dist.row(t) = weight * dt.transpose();
    dt = P.transpose() * dt;
    weight *= gamma;
  }
  return sol;
}

ExactSolution exact_eval(const TabularMdp& mdp, const PolicyParams& policy) {
  if (!policy.is_tabular())
    throw Error(ErrorCode::kUnsupportedFamily, "exact_eval needs a tabular-softmax policy");
  if (policy.num_states() != mdp.num_states || policy.num_actions() != mdp.num_actions)
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("policy shape {}x{} does not match MDP {}x{}", policy.num_states(),
                            policy.num_actions(), mdp.num_states, mdp.num_actions));
  return exact_eval(mdp, action_probs(policy));
}

PerformanceDifference performance_difference(const TabularMdp& mdp, const Eigen::MatrixXd& pi,
                                             const Eigen::MatrixXd& pi_prime) {
  const ExactSolution a = exact_eval(mdp, pi);
  const ExactSolution b = exact_eval(mdp, pi_prime);
  PerformanceDifference out;
  out.lhs = a.total_cost - b.total_cost;
  out.rhs = a.state_dist.dot(expect_actions(pi, b.adv)) / (1.0 - mdp.gamma);
  return out;
}

Eigen::MatrixXd deterministic_policy(int num_actions, const std::vector<int>& actions) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), num_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) p(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  return p;
}

OptimalSolution solve_optimal(const TabularMdp& mdp) {
  const int S = mdp.num_states;
  std::vector<int> actions(static_cast<std::size_t>(S), 0);
  OptimalSolution out;
  for (int it = 1; it <= 10000; ++it) {
    const ExactSolution sol = exact_eval(mdp, deterministic_policy(mdp.num_actions, actions));
    bool changed = false;
    for (int s = 0; s < S; ++s) {
      Eigen::Index best = 0;
      sol.q.row(s).minCoeff(&best);
      // Switch only on strict improvement to avoid cycling between ties.
      if (sol.q(s, best) < sol.q(s, actions[static_cast<std::size_t>(s)]) - 1e-12) {
        actions[static_cast<std::size_t>(s)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) {
      out.q = sol.q;
      out.v = sol.v;
      out.greedy_policy = deterministic_policy(mdp.num_actions, actions);
      out.total_cost = sol.total_cost;
      out.iterations = it;
      return out;
    }
  }
  throw Error(ErrorCode::kNotConverged, "policy iteration did not converge");
}

}  // namespace lokilab
