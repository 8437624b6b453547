#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lokilab/exact.hpp"
#include "lokilab/lq.hpp"
#include "lokilab/mdp.hpp"
#include "lokilab/policy.hpp"
#include "lokilab/sampling.hpp"

namespace lokilab {

enum class OracleKind { kPg, kDaggered, kAggrevated, kSlols, kThor, kDpg };
enum class OracleMode { kExact, kSampled };
enum class BiasFlag { kExact, kUnbiasedEstimate, kBiasedEstimate };

const char* to_string(OracleKind kind);
OracleKind oracle_kind_from_string(const std::string& name);
const char* to_string(OracleMode mode);
OracleMode oracle_mode_from_string(const std::string& name);
const char* to_string(BiasFlag flag);

struct OracleGradient {
  Eigen::VectorXd g;
  OracleKind kind = OracleKind::kPg;
  long samples_used = 0;            // visited (state, action) steps
  double empirical_variance = 0.0;  // trace covariance of the batch mean
  BiasFlag bias = BiasFlag::kExact;
  long expert_queries = 0;
};

enum class SurrogateKind { kKlExpertLearner, kSquaredDistance, kExpertAdvantage };

const char* to_string(SurrogateKind kind);
SurrogateKind surrogate_kind_from_string(const std::string& name);

struct SurrogateLossSpec {
  SurrogateKind kind = SurrogateKind::kKlExpertLearner;
  std::optional<double> c_star;
};

void validate(const SurrogateLossSpec& spec);

enum class AdvantageKind { kExactDp, kGae, kMcTruncated };

const char* to_string(AdvantageKind kind);
AdvantageKind advantage_kind_from_string(const std::string& name);

/// Value estimate plus the rule that turns it into per-step advantages.
struct AdvantageEstimator {
  AdvantageKind kind = AdvantageKind::kGae;
  Eigen::VectorXd value;      // V-hat(s)
  Eigen::MatrixXd exact_adv;  // kExactDp only
  double lambda_gae = 0.98;
  int horizon_H = 0;          // kMcTruncated; 0 means the full rollout
  double explained_variance = std::numeric_limits<double>::quiet_NaN();
  long samples = 0;
};

void validate(const AdvantageEstimator& est);

/// Demonstrator queried by the imitation oracles.
struct ExpertPolicy {
  PolicyParams params;
  Eigen::MatrixXd probs;                // tabular experts
  std::optional<ExactSolution> exact;   // tabular experts with known dynamics
  Eigen::VectorXd value_hat;            // fitted V of the expert
  double value_explained_variance = std::numeric_limits<double>::quiet_NaN();
  long value_fit_samples = 0;

  bool is_tabular() const { return params.is_tabular(); }
  /// Fitted value if present, else the exact one.
  const Eigen::VectorXd& value() const;
};

/// Softmax over -Q*/temperature; exact solution attached, no fitted value.
ExpertPolicy make_tempered_expert(const TabularMdp& mdp, double temperature);
ExpertPolicy make_expert_from_probs(const TabularMdp& mdp, const Eigen::MatrixXd& probs);
ExpertPolicy make_lq_expert(const PolicyParams& params);

/// Fits the expert's value by LSTD(0) on at least `transitions` expert steps.
void fit_expert_value(ExpertPolicy& expert, const TabularMdp& mdp, long transitions,
                      std::uint64_t seed, double ridge = 1e-3);

// ---- value fitting and advantage estimation (value.cpp) ----

struct ValueFitOptions {
  double ridge = 1e-3;
  Eigen::VectorXd prior;  // ridge target; empty means zeros
  bool cross_fit = true;  // compute explained variance by 2-fold cross-fitting
};

/// Tabular LSTD(0): solves sum phi (phi - gamma phi')^T w + ridge (w - prior)
/// = sum phi c. Explained variance is measured on held-out halves against
/// per-state averaged TD(0) targets. Throws on an empty batch.
AdvantageEstimator fit_value(const std::vector<Trajectory>& batch, int num_states, double gamma,
                             const ValueFitOptions& options = {});
/// Per-state least squares on given regression targets.
AdvantageEstimator fit_value_targets(const std::vector<int>& states,
                                     const std::vector<double>& targets, int num_states);
/// Exact mode: copies the DP values and advantages.
AdvantageEstimator exact_value_estimator(const ExactSolution& sol);

/// GAE: A_t = sum_k (gamma lambda)^k delta_{t+k}, delta_t = c_t + gamma V(s_{t+1}) - V(s_t),
/// bootstrapped with V(final_state).
std::vector<double> gae(const Trajectory& traj, const Eigen::VectorXd& value, double gamma,
                        double lambda_gae);
/// sum_{k<h} gamma^k c_{t+k} + gamma^h V(s_{t+h}) - V(s_t), h = min(H, T - t).
std::vector<double> truncated_advantage(const Trajectory& traj, const Eigen::VectorXd& value,
                                        double gamma, int H);
/// Per-step advantages according to the estimator kind.
std::vector<double> estimate_advantages(const Trajectory& traj, const AdvantageEstimator& est,
                                        double gamma);

// ---- likelihood-ratio kernel shared by all tabular oracles ----

/// Exact: block s = d(s) sum_a signal(s, a) grad pi(a|s).
Eigen::VectorXd exact_likelihood_ratio(const PolicyParams& policy, const Eigen::VectorXd& state_dist,
                                       const Eigen::MatrixXd& signal);
/// Sampled: mean over trajectories of (1 - gamma) sum_t gamma^t signal_t grad log pi(a_t|s_t).
OracleGradient sampled_likelihood_ratio(const PolicyParams& policy, double gamma,
                                        const std::vector<Trajectory>& batch,
                                        const std::vector<std::vector<double>>& signals);
/// Same reduction, single-threaded; reference for the parallel kernel.
OracleGradient sampled_likelihood_ratio_serial(const PolicyParams& policy, double gamma,
                                               const std::vector<Trajectory>& batch,
                                               const std::vector<std::vector<double>>& signals);

// ---- oracles ----

/// Exact mode returns (1 - gamma) grad J; sampled mode uses the estimator's advantages.
OracleGradient pg_oracle(const TabularMdp& mdp, const PolicyParams& policy,
                         const AdvantageEstimator& adv, const std::vector<Trajectory>& batch,
                         OracleMode mode);
OracleGradient pg_exact(const TabularMdp& mdp, const PolicyParams& policy);

struct BaselinePair {
  Eigen::VectorXd with_baseline;
  Eigen::VectorXd without_baseline;
};

/// Exact gradient with signal Q - b(s) versus Q.
BaselinePair baseline_invariance(const TabularMdp& mdp, const PolicyParams& policy,
                                 const Eigen::VectorXd& baseline);

/// (1 - gamma) grad J for a deterministic linear policy on an LQ task:
/// E_d[grad_a Q(x, Kx) x^T].
OracleGradient dpg_oracle(const LqTask& task, const PolicyParams& policy);

/// Gradient of E_{d_pi_n}[KL(pi*_s || pi_s)] (or the squared-distance surrogate
/// 1[a != a*]). Sampled squared-distance draws one expert action per visited
/// state from stream (query_seed, t, i).
OracleGradient daggered_oracle(const TabularMdp& mdp, const PolicyParams& policy,
                               const ExpertPolicy& expert, const SurrogateLossSpec& loss,
                               const std::vector<Trajectory>& batch, OracleMode mode,
                               std::uint64_t query_seed = 0);

/// Linear-Gaussian imitation gradient on an LQ task. Squared distance uses
/// `action_samples` reparametrized learner actions against one expert query per
/// visited state; KL uses the closed-form Gaussian KL.
OracleGradient daggered_oracle_lq(const LqTask& task, const PolicyParams& policy,
                                  const ExpertPolicy& expert, const SurrogateLossSpec& loss,
                                  const std::vector<LqTrajectory>& batch, int action_samples,
                                  std::uint64_t seed);

/// Signal A_{pi*}: exact table, or TD residual c + gamma V*(s') - V*(s).
OracleGradient aggrevated_oracle(const TabularMdp& mdp, const PolicyParams& policy,
                                 const ExpertPolicy& expert, const std::vector<Trajectory>& batch,
                                 OracleMode mode);

/// (1 - lambda) pg + lambda aggrevated on the same batch.
OracleGradient slols_oracle(const TabularMdp& mdp, const PolicyParams& policy,
                            const ExpertPolicy& expert, const AdvantageEstimator& adv,
                            double lambda, const std::vector<Trajectory>& batch, OracleMode mode);

/// H-step truncated advantage with the expert's value as terminal signal.
/// `baseline` subtracts the per-state batch mean of the estimates.
OracleGradient thor_oracle(const TabularMdp& mdp, const PolicyParams& policy,
                           const ExpertPolicy& expert, int H, const std::vector<Trajectory>& batch,
                           bool baseline = true);
/// Per-step THOR signals (before the baseline).
std::vector<std::vector<double>> thor_signals(const std::vector<Trajectory>& batch,
                                              const Eigen::VectorXd& expert_value, double gamma,
                                              int H);

/// max_s E_pi[A*] / KL(pi* || pi) over the supplied policies and states with
/// KL > min_kl; the empirical constant for the KL surrogate.
double empirical_surrogate_constant(const ExpertPolicy& expert,
                                    const std::vector<Eigen::MatrixXd>& policies,
                                    double min_kl = 1e-12);

}  // namespace lokilab
