#include "lokilab/drivers.hpp"

#include <cmath>
#include <span>

#include <fmt/format.h>

#include "lokilab/error.hpp"
#include "lokilab/exact.hpp"
#include "lokilab/sampling.hpp"

namespace lokilab {
namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kSwitchStream = 0x5717C4;
constexpr std::uint64_t kQueryStream = 0xD1;
constexpr int kMaxHalvings = 40;

bool uses_expert(Algorithm alg) { return alg != Algorithm::kPg; }

Phase phase_of(Algorithm alg, int n, int K) {
  switch (alg) {
    case Algorithm::kLoki: return n <= K ? Phase::kImitation : Phase::kReinforcement;
    case Algorithm::kDaggered: return Phase::kImitation;
    default: return Phase::kReinforcement;
  }
}

OracleGradient query_oracle(Algorithm alg, Phase phase, const TabularMdp& mdp,
                            const PolicyParams& policy, const ExpertPolicy* expert,
                            const AdvantageEstimator& adv, const std::vector<Trajectory>& batch,
                            const RunConfig& cfg, std::uint64_t query_seed) {
  if (phase == Phase::kImitation)
    return daggered_oracle(mdp, policy, *expert, cfg.surrogate, batch, cfg.mode, query_seed);
  switch (alg) {
    case Algorithm::kAggrevated: return aggrevated_oracle(mdp, policy, *expert, batch, cfg.mode);
    case Algorithm::kSlols:
      return slols_oracle(mdp, policy, *expert, adv, cfg.slols_lambda, batch, cfg.mode);
    case Algorithm::kThor:
      return thor_oracle(mdp, policy, *expert, cfg.thor_H, batch, cfg.thor_baseline);
    default: return pg_oracle(mdp, policy, adv, batch, cfg.mode);
  }
}

AdvantageEstimator make_estimator(const RunConfig& cfg, const Eigen::VectorXd& value,
                                  const ExactSolution& sol) {
  AdvantageEstimator est;
  est.kind = cfg.adv_kind;
  est.value = value;
  est.lambda_gae = cfg.gae_lambda;
  est.horizon_H = cfg.mc_horizon;
  if (cfg.adv_kind == AdvantageKind::kExactDp) {
    est.value = sol.v;
    est.exact_adv = sol.adv;
  }
  return est;
}

}  // namespace

void validate(const SwitchDistribution& dist) {
  if (dist.n_min < 1) throw Error(ErrorCode::kPrecondition, "switch distribution: N_m must be >= 1");
  if (dist.n_max < 2 * dist.n_min)
    throw Error(ErrorCode::kPrecondition,
                fmt::format("switch distribution: N_M = {} must be >= 2 N_m = {}", dist.n_max, 2 * dist.n_min));
  if (dist.d < 0) throw Error(ErrorCode::kPrecondition, "switch distribution: d must be >= 0");
}

std::vector<double> switch_pmf(const SwitchDistribution& dist) {
  validate(dist);
  std::vector<double> w;
  double total = 0.0;
  for (int n = dist.n_min; n <= dist.n_max; ++n) {
    w.push_back(std::pow(static_cast<double>(n), dist.d));
    total += w.back();
  }
  for (double& x : w) x /= total;
  return w;
}

int sample_switch(const SwitchDistribution& dist, CounterRng& rng) {
  const std::vector<double> pmf = switch_pmf(dist);
  return dist.n_min + rng.categorical(std::span<const double>(pmf));
}

double c_nm_constant(int d, int n_max) {
  if (d < 0 || n_max < 1) throw Error(ErrorCode::kInvalidArgument, "c_nm_constant: need d >= 0, N_M >= 1");
  if (d == 0) return std::log(static_cast<double>(n_max)) + 1.0;
  return 8.0 * d / 3.0 * std::exp(static_cast<double>(d) / n_max);
}

const char* to_string(Algorithm alg) {
  switch (alg) {
    case Algorithm::kLoki: return "loki";
    case Algorithm::kPg: return "pg";
    case Algorithm::kDaggered: return "daggered";
    case Algorithm::kAggrevated: return "aggrevated";
    case Algorithm::kSlols: return "slols";
    case Algorithm::kThor: return "thor";
    case Algorithm::kIdeal: return "ideal";
  }
  return "unknown";
}

Algorithm algorithm_from_string(const std::string& name) {
  for (auto a : {Algorithm::kLoki, Algorithm::kPg, Algorithm::kDaggered, Algorithm::kAggrevated,
                 Algorithm::kSlols, Algorithm::kThor, Algorithm::kIdeal})
    if (name == to_string(a)) return a;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown algorithm '{}'", name));
}

const char* to_string(Phase phase) {
  return phase == Phase::kImitation ? "imitation" : "reinforcement";
}

void validate(const RunConfig& c) {
  if (c.iterations < 1) throw Error(ErrorCode::kInvalidArgument, "iterations must be >= 1");
  if (c.batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (c.horizon < 0) throw Error(ErrorCode::kInvalidArgument, "horizon must be >= 0");
  if (c.forced_switch) {
    if (*c.forced_switch < 0 || *c.forced_switch > c.iterations)
      throw Error(ErrorCode::kInvalidArgument, "forced switch must lie in [0, iterations]");
  } else {
    validate(c.switch_dist);
  }
  if (!(c.kl_imitation > 0.0) || !(c.kl_reinforce > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "trust-region KL budgets must be positive");
  if (!(c.fisher_damping > 0.0)) throw Error(ErrorCode::kInvalidArgument, "fisher damping must be positive");
  if (c.bregman == BregmanKind::kNegEntropy)
    throw Error(ErrorCode::kInvalidArgument, "neg-entropy geometry does not apply to softmax logits");
  if (!(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "oracle.gae_lambda must lie in [0, 1]");
  if (!(c.slols_lambda >= 0.0 && c.slols_lambda <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "oracle.lambda must lie in [0, 1]");
  if (c.thor_H < 1) throw Error(ErrorCode::kInvalidArgument, "oracle.horizon_H must be >= 1");
  if (!(c.value_ridge > 0.0)) throw Error(ErrorCode::kInvalidArgument, "value.ridge must be positive");
  if (!(c.init_scale >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "init.scale must be >= 0");
  validate(c.surrogate);
}

double expected_kl(const Eigen::VectorXd& state_dist, const Eigen::MatrixXd& p,
                   const Eigen::MatrixXd& q) {
  double total = 0.0;
  for (Eigen::Index s = 0; s < p.rows(); ++s) {
    double kl = 0.0;
    for (Eigen::Index a = 0; a < p.cols(); ++a)
      if (p(s, a) > 0.0) kl += p(s, a) * (std::log(p(s, a)) - std::log(q(s, a)));
    total += state_dist(s) * kl;
  }
  return total;
}

PolicyParams initial_policy(const TabularMdp& mdp, double init_scale, std::uint64_t seed) {
  PolicyParams p = PolicyParams::tabular(mdp.num_states, mdp.num_actions);
  CounterRng rng = CounterRng::stream(seed, {kInitStream});
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta(i) = init_scale * rng.normal();
  return p;
}

int draw_switch(const RunConfig& config, std::uint64_t seed) {
  if (config.forced_switch) return *config.forced_switch;
  CounterRng rng = CounterRng::stream(seed, {kSwitchStream});
  return sample_switch(config.switch_dist, rng);
}

RunRecord run_algorithm(Algorithm kind, const TabularMdp& mdp, const ExpertPolicy* expert,
                        const RunConfig& cfg, std::uint64_t seed) {
  validate(mdp);
  validate(cfg);
  if (uses_expert(kind) && expert == nullptr)
    throw Error(ErrorCode::kMissingExpertData, fmt::format("{} needs an expert", to_string(kind)));
  if (expert && expert->is_tabular() &&
      (expert->probs.rows() != mdp.num_states || expert->probs.cols() != mdp.num_actions))
    throw Error(ErrorCode::kDimensionMismatch, "expert does not match the MDP");

  RunRecord rec;
  rec.algorithm = kind;
  rec.seed = seed;
  rec.K = kind == Algorithm::kLoki       ? draw_switch(cfg, seed)
          : kind == Algorithm::kDaggered ? cfg.iterations
                                         : 0;
  PolicyParams policy = kind == Algorithm::kIdeal ? expert->params : initial_policy(mdp, cfg.init_scale, seed);
  const int T = cfg.horizon > 0 ? cfg.horizon : tail_horizon(mdp);
  Eigen::VectorXd value = Eigen::VectorXd::Zero(mdp.num_states);
  ValueFitOptions fit_opt;
  fit_opt.ridge = cfg.value_ridge;
  fit_opt.cross_fit = false;
  int imitation_steps = 0;
  int reinforce_steps = 0;

  for (int n = 1; n <= cfg.iterations; ++n) {
    try {
      const Phase phase = phase_of(kind, n, rec.K);
      const Eigen::MatrixXd pi = action_probs(policy);
      const ExactSolution sol = exact_eval(mdp, pi);
      const auto batch = sample_trajectories(mdp, pi, cfg.batch_size, T, seed, static_cast<std::uint64_t>(n));
      const std::uint64_t query_seed = CounterRng::stream(seed, {kQueryStream, static_cast<std::uint64_t>(n)})();
      const AdvantageEstimator adv = make_estimator(cfg, value, sol);
      const OracleGradient grad = query_oracle(kind, phase, mdp, policy, expert, adv, batch, cfg, query_seed);

      IterationRecord it;
      it.iter = n;
      it.phase = phase;
      it.J_exact = sol.total_cost;
      it.J_mc = mean_discounted_return(batch, mdp.gamma);
      it.grad_norm = grad.g.norm();
      it.expert_queries = grad.expert_queries;

      const Eigen::MatrixXd F = fisher_matrix(policy, sol.state_dist);
      BregmanSpec spec;
      double eta = 0.0;
      const bool trust_region = cfg.step_mode == StepMode::kTrustRegion;
      if (trust_region) {
        spec = BregmanSpec::fisher(F, cfg.fisher_damping);
        eta = trust_region_eta(grad.g, spec.weight,
                               phase == Phase::kImitation ? cfg.kl_imitation : cfg.kl_reinforce);
      } else {
        spec = cfg.bregman == BregmanKind::kFisherQuadratic ? BregmanSpec::fisher(F, cfg.fisher_damping)
                                                            : BregmanSpec::euclidean();
        eta = phase == Phase::kImitation ? step_size(cfg.imitation_schedule, imitation_steps + 1)
                                         : step_size(cfg.reinforce_schedule, reinforce_steps + 1);
      }
      (phase == Phase::kImitation ? imitation_steps : reinforce_steps) += 1;
      if (eta > 0.0) {
        const double budget = phase == Phase::kImitation ? cfg.kl_imitation : cfg.kl_reinforce;
        PolicyParams next = policy;
        for (int halvings = 0;; ++halvings) {
          next.theta = prox_step(policy.theta, grad.g, spec, eta).theta_next;
          it.kl_moved = expected_kl(sol.state_dist, pi, action_probs(next));
          if (!trust_region || !cfg.kl_backtrack || it.kl_moved <= budget || halvings == kMaxHalvings) break;
          eta *= 0.5;
        }
        policy = std::move(next);
      }
      it.eta = eta;

      fit_opt.prior = value;
      value = fit_value(batch, mdp.num_states, mdp.gamma, fit_opt).value;
      rec.expert_queries += it.expert_queries;
      rec.iterations.push_back(it);
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("{} iteration {}: {}", to_string(kind), n, e.what()));
    }
  }
  rec.final_policy = policy;
  rec.final_J = exact_eval(mdp, policy).total_cost;
  rec.final_value = value;
  return rec;
}

RunRecord run_loki(const TabularMdp& mdp, const ExpertPolicy& expert, const RunConfig& config,
                   std::uint64_t seed) {
  return run_algorithm(Algorithm::kLoki, mdp, &expert, config, seed);
}

RunRecord run_baseline(Algorithm kind, const TabularMdp& mdp, const ExpertPolicy* expert,
                       const RunConfig& config, std::uint64_t seed) {
  if (kind == Algorithm::kLoki) throw Error(ErrorCode::kInvalidArgument, "run_baseline: use run_loki");
  return run_algorithm(kind, mdp, expert, config, seed);
}

}  // namespace lokilab
