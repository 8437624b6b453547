#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "lokilab/lq.hpp"
#include "lokilab/mdp.hpp"
#include "lokilab/policy.hpp"
#include "lokilab/rng.hpp"

namespace lokilab {

/// One truncated rollout. `final_state` is the state reached after the last
/// action and bootstraps value targets at the cut.
struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> costs;
  std::vector<double> log_probs;
  int final_state = 0;
  int horizon = 0;
};

inline constexpr double kTailTolerance = 1e-6;

/// Smallest T with gamma^T c_max / (1 - gamma) <= tol.
int tail_horizon(double gamma, double max_abs_cost, double tol = kTailTolerance);
int tail_horizon(const TabularMdp& mdp, double tol = kTailTolerance);

/// Trajectory i draws from CounterRng::stream(seed, {stream, i}), so the
/// parallel and serial versions return identical batches.
std::vector<Trajectory> sample_trajectories(const TabularMdp& mdp,
                                            const Eigen::MatrixXd& policy_probs, int count,
                                            int horizon, std::uint64_t seed,
                                            std::uint64_t stream = 0);
std::vector<Trajectory> sample_trajectories(const TabularMdp& mdp, const PolicyParams& policy,
                                            int count, int horizon, std::uint64_t seed,
                                            std::uint64_t stream = 0);
std::vector<Trajectory> sample_trajectories_serial(const TabularMdp& mdp,
                                                   const Eigen::MatrixXd& policy_probs,
                                                   int count, int horizon, std::uint64_t seed,
                                                   std::uint64_t stream = 0);

/// Sum over steps of gamma^t c_t for each trajectory.
double discounted_return(const Trajectory& traj, double gamma);
double mean_discounted_return(const std::vector<Trajectory>& batch, double gamma);

struct DiscountedDraw {
  int state = 0;
  int time = 0;
};

/// t ~ Geometric(1 - gamma), then the state at time t of a fresh rollout.
DiscountedDraw sample_discounted_state(const TabularMdp& mdp, const Eigen::MatrixXd& policy_probs,
                                       CounterRng& rng);

struct LqTrajectory {
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> actions;
  std::vector<Eigen::VectorXd> noises;
  std::vector<double> costs;
  std::vector<double> log_probs;
  Eigen::VectorXd final_state;
  int horizon = 0;
};

inline constexpr double kLqOverflowGuard = 1e12;

/// Rollouts of a linear policy. Throws DivergedRollout with the step index
/// once any state coordinate exceeds kLqOverflowGuard.
std::vector<LqTrajectory> sample_lq_trajectories(const LqTask& task, const PolicyParams& policy,
                                                 int count, int horizon, std::uint64_t seed,
                                                 std::uint64_t stream = 0);
std::vector<LqTrajectory> sample_lq_trajectories_serial(const LqTask& task,
                                                        const PolicyParams& policy, int count,
                                                        int horizon, std::uint64_t seed,
                                                        std::uint64_t stream = 0);

}  // namespace lokilab
