#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lokilab/mdp.hpp"
#include "lokilab/mirror.hpp"
#include "lokilab/oracles.hpp"
#include "lokilab/policy.hpp"
#include "lokilab/rng.hpp"

namespace lokilab {

/// Law of the switch time K on [n_min, n_max]: P(K = n) proportional to n^d.
struct SwitchDistribution {
  int n_min = 10;
  int n_max = 20;
  int d = 3;
};

/// Requires n_min >= 1, n_max >= 2 n_min, d >= 0.
void validate(const SwitchDistribution& dist);

/// Entry i is P(K = n_min + i).
std::vector<double> switch_pmf(const SwitchDistribution& dist);
int sample_switch(const SwitchDistribution& dist, CounterRng& rng);

/// log(N_M) + 1 for d = 0, (8d/3) exp(d / N_M) for d >= 1.
double c_nm_constant(int d, int n_max);

enum class Algorithm { kLoki, kPg, kDaggered, kAggrevated, kSlols, kThor, kIdeal };

const char* to_string(Algorithm alg);
Algorithm algorithm_from_string(const std::string& name);

enum class Phase { kImitation, kReinforcement };

const char* to_string(Phase phase);

enum class StepMode { kTrustRegion, kSchedule };

struct RunConfig {
  int iterations = 100;
  int batch_size = 20;
  int horizon = 0;  // 0: tail_horizon of the MDP
  SwitchDistribution switch_dist;
  /// Replaces the sampled K (0 gives pure reinforcement, iterations gives pure imitation).
  std::optional<int> forced_switch;

  StepMode step_mode = StepMode::kTrustRegion;
  double kl_imitation = 0.1;
  double kl_reinforce = 0.01;
  double fisher_damping = kDefaultFisherDamping;
  /// Halve eta until the exact E_d KL(pi_n || pi_{n+1}) is within the budget.
  bool kl_backtrack = true;
  BregmanKind bregman = BregmanKind::kFisherQuadratic;  // schedule mode only
  StepSchedule imitation_schedule{ScheduleKind::kThm1, 0.1, 1.0, 3};
  StepSchedule reinforce_schedule{ScheduleKind::kConstant, 0.1, 1.0, 0};

  OracleMode mode = OracleMode::kSampled;
  SurrogateLossSpec surrogate;
  AdvantageKind adv_kind = AdvantageKind::kGae;
  double gae_lambda = 0.98;
  int mc_horizon = 0;
  double slols_lambda = 0.5;
  int thor_H = 10;
  bool thor_baseline = true;

  double value_ridge = 1e-3;
  double init_scale = 1.0;  // initial logits ~ N(0, init_scale^2)
  double beta = 0.0;        // smoothness estimate; informational
};

void validate(const RunConfig& config);

struct IterationRecord {
  int iter = 0;
  Phase phase = Phase::kReinforcement;
  double J_exact = 0.0;
  double J_mc = 0.0;
  double grad_norm = 0.0;
  double kl_moved = 0.0;
  double eta = 0.0;
  long expert_queries = 0;
};

/// Record n holds pi_n and the update it received; final_J is J(pi_{N+1}).
struct RunRecord {
  Algorithm algorithm = Algorithm::kPg;
  std::uint64_t seed = 0;
  int K = 0;
  std::vector<IterationRecord> iterations;
  PolicyParams final_policy;
  double final_J = 0.0;
  long expert_queries = 0;
  Eigen::VectorXd final_value;
};

/// E_d KL(p_s || q_s).
double expected_kl(const Eigen::VectorXd& state_dist, const Eigen::MatrixXd& p,
                   const Eigen::MatrixXd& q);

/// Random logits from stream (seed, "init").
PolicyParams initial_policy(const TabularMdp& mdp, double init_scale, std::uint64_t seed);

/// K from stream (seed, "switch"), or the forced value.
int draw_switch(const RunConfig& config, std::uint64_t seed);

RunRecord run_loki(const TabularMdp& mdp, const ExpertPolicy& expert, const RunConfig& config,
                   std::uint64_t seed);
/// `expert` may be null for pg.
RunRecord run_baseline(Algorithm kind, const TabularMdp& mdp, const ExpertPolicy* expert,
                       const RunConfig& config, std::uint64_t seed);
RunRecord run_algorithm(Algorithm kind, const TabularMdp& mdp, const ExpertPolicy* expert,
                        const RunConfig& config, std::uint64_t seed);

}  // namespace lokilab
