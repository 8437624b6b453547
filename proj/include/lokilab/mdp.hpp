#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace lokilab {

/// Finite discounted MDP with costs (minimized throughout).
///
/// Transition row `s * num_actions + a` of `transition` holds P(. | s, a).
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  double gamma = 0.0;
  Eigen::MatrixXd transition;    // (S*A) x S
  Eigen::MatrixXd cost;          // S x A
  Eigen::VectorXd initial_dist;  // S

  int row(int s, int a) const { return s * num_actions + a; }
  double max_abs_cost() const { return cost.cwiseAbs().maxCoeff(); }
};

/// Throws Error(kInvalidArgument) unless every invariant holds: stochastic
/// rows within 1e-12, nonnegative entries, gamma in [0, 1).
void validate(const TabularMdp& mdp);

/// Two states; s0 costs 1, s1 costs 0. a0 stays, a1 switches. Starts in s0.
TabularMdp make_chain2(double gamma = 0.5);

/// 4x4 cliff gridworld: start bottom-left, absorbing goal bottom-right, the
/// two cells between them are a cliff (cost 10, back to start). Moves slip to
/// a perpendicular direction with probability `slip`.
TabularMdp make_cliff_gridworld(double gamma = 0.9, double slip = 0.1);

/// Dense random MDP: Dirichlet-like rows, uniform costs in [0, 1).
TabularMdp make_random_mdp(std::uint64_t seed, int num_states, int num_actions,
                           double gamma = 0.9);

/// Zoo lookup: "chain2", "gridworld-4x4", "random(seed,S,A)".
TabularMdp make_zoo_mdp(std::string_view name);
std::vector<std::string> zoo_names();

/// Relabels states: new state i is old state perm[i].
TabularMdp permute_states(const TabularMdp& mdp, const std::vector<int>& perm);

nlohmann::json to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const nlohmann::json& j);
void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path);
TabularMdp load_mdp(const std::filesystem::path& path);

}  // namespace lokilab
