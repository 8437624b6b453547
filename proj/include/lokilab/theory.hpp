#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lokilab/drivers.hpp"
#include "lokilab/mdp.hpp"
#include "lokilab/mirror.hpp"
#include "lokilab/oracles.hpp"

namespace lokilab {

/// lhs <= rhs up to `tolerance`; `terms` keeps the pieces of the bound.
struct BoundReport {
  std::string name;
  double empirical_lhs = 0.0;
  double theoretical_rhs = 0.0;
  double slack = 0.0;  // rhs - lhs
  double tolerance = 0.0;
  bool pass = false;
  std::map<std::string, double> terms;
};

BoundReport make_report(std::string name, double lhs, double rhs, double tolerance);

// ---- synthetic online problems ----

enum class CenterKind { kFixed, kRandom, kAlternating };

const char* to_string(CenterKind kind);

/// Losses f_n(x) = sigma/2 ||x - z_n||^2 over a Euclidean ball around the
/// origin, with R = 1/2 ||x||^2 (so sigma is exact).
struct SyntheticOnlineProblem {
  int dim = 5;
  double sigma = 1.0;
  double radius = 1.0;          // feasible ball
  Eigen::MatrixXd centers;      // column n - 1 is z_n
  double grad_bound = 0.0;      // sigma (radius + max ||z_n||)

  int rounds() const { return static_cast<int>(centers.cols()); }
  double loss(int n, const Eigen::VectorXd& x) const;
  Eigen::VectorXd grad(int n, const Eigen::VectorXd& x) const;
};

/// Centers drawn uniformly in the ball of radius center_radius (random),
/// all equal to one draw (fixed), or +-e_1 center_radius (alternating).
SyntheticOnlineProblem make_synthetic_problem(CenterKind kind, int dim, int rounds, double sigma,
                                              double radius, double center_radius,
                                              std::uint64_t seed);

/// Projection of the weighted center mean onto the ball, over rounds [first, last].
Eigen::VectorXd offline_minimizer(const SyntheticOnlineProblem& problem,
                                  const std::vector<double>& weights, int first, int last);

/// Average regret of eta_n = 1/(sigma_hat n) against G^2 (log N + 1)/(2 sigma_hat N).
BoundReport check_prop2(const SyntheticOnlineProblem& problem, int N, double sigma_hat);

/// Weighted updates with eta_n = 1/(sigma_hat sum_{m<=n} w_m), w_n = n^d; the
/// suffix-regret inequality checked at every M in `suffixes`. The report holds
/// the tightest M.
BoundReport check_lemma5(const SyntheticOnlineProblem& problem, const std::vector<double>& weights,
                         const std::vector<int>& suffixes, double sigma_hat);
std::vector<double> power_weights(int N, int d);

// ---- smooth descent ----

/// J(x) = 1/2 x^T H x with mirror steps under R = 1/2 x^T W x and norm ||.||_W.
struct SmoothProblem {
  Eigen::MatrixXd hessian;
  Eigen::MatrixXd weight;
  Eigen::VectorXd start;
  double beta = 0.0;   // largest eigenvalue of W^{-1} H
  double alpha = 1.0;  // R is 1-strongly convex in ||.||_W
};

SmoothProblem make_smooth_problem(int dim, std::uint64_t seed);

struct DescentOptions {
  double eta = 0.1;
  double noise_moment = 0.0;  // E ||xi||_*^2
  int iterations = 200;
  int ensemble = 200;
  std::uint64_t seed = 1;
};

/// Accumulated descent inequality over an ensemble (2 SE tolerance), plus the
/// per-step quadratic-R refinement (recorded as `per_step_worst_slack`). With
/// eta > 2 alpha / beta the report is marked with `precondition_violated` and fails.
BoundReport check_prop1_descent(const SmoothProblem& problem, const DescentOptions& options);

struct NoiseFloorReport {
  std::vector<double> eta_times_v;
  std::vector<double> floor;  // tail mean of ||grad-hat J||^2
  double r_squared = 0.0;
  double slope = 0.0;
};

NoiseFloorReport noise_floor_sweep(const SmoothProblem& problem, const std::vector<double>& etas,
                                   double noise_moment, int iterations, int tail,
                                   std::uint64_t seed);

/// Zero-noise run at eta = alpha / beta: J strictly decreases at every step
/// until it reaches `floor`.
BoundReport check_monotone_descent(const SmoothProblem& problem, int iterations);

// ---- prox machinery and switch law ----

/// Nonexpansiveness over `cases` random (theta, g, h, eta) draws for one geometry.
BoundReport check_nonexpansive(BregmanKind kind, int cases, std::uint64_t seed);

/// Pearson chi-square of `draws` sampled K values against switch_pmf at level 0.001.
BoundReport check_switch_law(const SwitchDistribution& dist, int draws, std::uint64_t seed);

/// Upper quantile of the chi-square law.
double chi_square_critical(int dof, double level);

// ---- policy-level theorems ----

struct CertificationOptions {
  double logit_box = 10.0;     // ||theta||_inf bound during certification runs
  int ensemble = 200;
  int batch_size = 10;
  double init_scale = 1.0;
  double sigma_hat = 1.0;      // initial guess; halved until sigma_hat <= measured sigma
  int max_halvings = 30;
  double grad_headroom = 1.1;
  std::uint64_t seed = 1;
};

/// sup over the zero-sum logit box of 1/2 ||theta - theta'||^2.
double box_bregman_diameter(int num_states, int num_actions, double box);

struct Thm1Run {
  std::vector<double> J;            // J(pi_n), n = 1..N_M
  std::vector<double> grad_norm;    // ||g_n||_2
  std::vector<double> convexity;    // realized modulus at x*, per n
  std::vector<Eigen::MatrixXd> probs;
  PolicyParams last;                // pi_K
  int K = 0;
};

struct Thm1Result {
  BoundReport report;
  std::vector<Thm1Run> runs;
  double sigma_hat = 0.0;
  double delta = 0.0;
};

/// Imitation with the sampled KL oracle, Euclidean prox on the logit box and
/// the weighted schedule; compares E[J(pi_K)] with J(pi*) + Delta within 2 SE.
Thm1Result check_thm1(const TabularMdp& mdp, const ExpertPolicy& expert,
                      const SwitchDistribution& dist, const CertificationOptions& options);

/// Phase 2 from pi_K with exact-free sampled policy gradients at eta = alpha / beta;
/// adds the realized noise and descent terms to the imitation-phase bound.
BoundReport check_thm2(const TabularMdp& mdp, const ExpertPolicy* expert,
                       const SwitchDistribution& dist, int N, const CertificationOptions& options);

/// Smoothness estimate 8 max|c| / (1 - gamma)^2 for (1 - gamma) J in softmax logits.
double softmax_smoothness(const TabularMdp& mdp);

/// Exact SLOLS with eta_n = 1/(sigma_hat n). eps_regret is the realized average
/// regret of the mixed online losses and eps_class the per-state minimum, both
/// by DP; the G^2 (log N + 1)/(2 sigma_hat N) value is recorded alongside.
BoundReport check_thm3(const TabularMdp& mdp, const ExpertPolicy& expert, double lambda, int N,
                       double sigma_hat = 0.01, std::uint64_t seed = 1);

/// Per-state exact epsilon-class for the mixed loss over a recorded run.
double thm3_eps_class(const TabularMdp& mdp, const ExpertPolicy& expert, double lambda,
                      const std::vector<Eigen::MatrixXd>& policies);

// ---- suites ----

struct CheckEntry {
  std::string name;
  std::string suite;
};

/// Registered checks in run order.
std::vector<CheckEntry> registered_checks();
std::vector<std::string> suite_names();
/// Runs one named check; throws kInvalidArgument for unknown names.
std::vector<BoundReport> run_check(const std::string& name);
/// Runs a suite (or "all"); throws kInvalidArgument for unknown suites.
std::vector<BoundReport> run_suite(const std::string& suite);

}  // namespace lokilab
