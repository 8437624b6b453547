#include "lokilab/oracles.hpp"

#include <cmath>
#include <span>

#include <fmt/format.h>

#include "lokilab/error.hpp"
#include "lokilab/parallel.hpp"
#include "lokilab/rng.hpp"

namespace lokilab {
namespace {

void require_tabular_match(const TabularMdp& mdp, const PolicyParams& policy, const char* op) {
  if (!policy.is_tabular())
    throw Error(ErrorCode::kUnsupportedFamily, fmt::format("{} needs a tabular-softmax policy", op));
  if (policy.num_states() != mdp.num_states || policy.num_actions() != mdp.num_actions)
    throw Error(ErrorCode::kDimensionMismatch, fmt::format("{}: policy shape does not match the MDP", op));
}

void require_batch(const std::vector<Trajectory>& batch, const char* op) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: empty batch", op));
}

const ExactSolution& require_expert_exact(const ExpertPolicy& expert, const char* op) {
  if (!expert.exact)
    throw Error(ErrorCode::kMissingExpertData, fmt::format("{}: expert has no exact solution", op));
  return *expert.exact;
}

void require_expert_probs(const ExpertPolicy& expert, const TabularMdp& mdp, const char* op) {
  if (expert.probs.rows() != mdp.num_states || expert.probs.cols() != mdp.num_actions)
    throw Error(ErrorCode::kMissingExpertData,
                fmt::format("{}: expert cannot be queried on this MDP", op));
}

// Per-trajectory contributions (1 - gamma) sum_t gamma^t step(i, t, s) reduced
// by a fixed-order tree sum; `step` adds into the logit block of s.
template <class Step>
OracleGradient reduce_batch(Eigen::Index dim, int num_actions, double gamma,
                            const std::vector<Trajectory>& batch, bool parallel, Step&& step) {
  const int M = static_cast<int>(batch.size());
  std::vector<Eigen::VectorXd> parts(static_cast<std::size_t>(M));
  auto one = [&](int i) {
    const Trajectory& tr = batch[static_cast<std::size_t>(i)];
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    double w = 1.0 - gamma;
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      const int s = tr.states[t];
      step(i, t, w, g.segment(static_cast<Eigen::Index>(s) * num_actions, num_actions));
      w *= gamma;
    }
    parts[static_cast<std::size_t>(i)] = std::move(g);
  };
  if (parallel)
    parallel_for(M, one);
  else
    for (int i = 0; i < M; ++i) one(i);

  OracleGradient out;
  out.g = tree_sum(parts) / static_cast<double>(M);
  for (const auto& tr : batch) out.samples_used += static_cast<long>(tr.states.size());
  if (M > 1) {
    double ss = 0.0;
    for (const auto& p : parts) ss += (p - out.g).squaredNorm();
    out.empirical_variance = ss / (static_cast<double>(M) * (M - 1));
  }
  out.bias = BiasFlag::kUnbiasedEstimate;
  return out;
}

OracleGradient likelihood_ratio(const PolicyParams& policy, double gamma,
                                const std::vector<Trajectory>& batch,
                                const std::vector<std::vector<double>>& signals, bool parallel) {
  if (signals.size() != batch.size())
    throw Error(ErrorCode::kDimensionMismatch, "likelihood ratio: one signal sequence per trajectory");
  const Eigen::MatrixXd pi = action_probs(policy);
  const int A = policy.num_actions();
  return reduce_batch(policy.theta.size(), A, gamma, batch, parallel,
                      [&](int i, std::size_t t, double w, auto block) {
                        const Trajectory& tr = batch[static_cast<std::size_t>(i)];
                        const double sig = signals[static_cast<std::size_t>(i)][t];
                        const int s = tr.states[t];
                        const int a = tr.actions[t];
                        if (pi(s, a) <= 0.0)
                          throw Error(ErrorCode::kZeroProbabilityAction,
                                      fmt::format("action {} has zero probability in state {}", a, s));
                        block -= (w * sig) * pi.row(s).transpose();
                        block(a) += w * sig;
                      });
}

std::vector<std::vector<double>> td_residuals(const std::vector<Trajectory>& batch,
                                              const Eigen::VectorXd& value, double gamma) {
  std::vector<std::vector<double>> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Trajectory& tr = batch[i];
    const std::size_t T = tr.states.size();
    out[i].resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      const int next = t + 1 < T ? tr.states[t + 1] : tr.final_state;
      out[i][t] = tr.costs[t] + gamma * value(next) - value(tr.states[t]);
    }
  }
  return out;
}

OracleGradient exact_result(Eigen::VectorXd g, OracleKind kind) {
  OracleGradient out;
  out.g = std::move(g);
  out.kind = kind;
  out.bias = BiasFlag::kExact;
  return out;
}

OracleGradient combine(const OracleGradient& a, const OracleGradient& b, double lambda,
                       OracleKind kind) {
  OracleGradient out;
  out.g = (1.0 - lambda) * a.g + lambda * b.g;
  out.kind = kind;
  out.samples_used = std::max(a.samples_used, b.samples_used);
  out.empirical_variance = (1.0 - lambda) * (1.0 - lambda) * a.empirical_variance +
                           lambda * lambda * b.empirical_variance;
  out.expert_queries = a.expert_queries + b.expert_queries;
  out.bias = a.bias == b.bias ? a.bias : BiasFlag::kBiasedEstimate;
  return out;
}

}  // namespace

const char* to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::kPg: return "pg";
    case OracleKind::kDaggered: return "daggered";
    case OracleKind::kAggrevated: return "aggrevated";
    case OracleKind::kSlols: return "slols";
    case OracleKind::kThor: return "thor";
    case OracleKind::kDpg: return "dpg";
  }
  return "unknown";
}

OracleKind oracle_kind_from_string(const std::string& name) {
  for (auto k : {OracleKind::kPg, OracleKind::kDaggered, OracleKind::kAggrevated, OracleKind::kSlols,
                 OracleKind::kThor, OracleKind::kDpg})
    if (name == to_string(k)) return k;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown oracle kind '{}'", name));
}

const char* to_string(OracleMode mode) { return mode == OracleMode::kExact ? "exact" : "sampled"; }

OracleMode oracle_mode_from_string(const std::string& name) {
  if (name == "exact") return OracleMode::kExact;
  if (name == "sampled") return OracleMode::kSampled;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown oracle mode '{}'", name));
}

const char* to_string(BiasFlag flag) {
  switch (flag) {
    case BiasFlag::kExact: return "exact";
    case BiasFlag::kUnbiasedEstimate: return "unbiased-estimate";
    case BiasFlag::kBiasedEstimate: return "biased-estimate";
  }
  return "unknown";
}

const char* to_string(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::kKlExpertLearner: return "kl-expert-learner";
    case SurrogateKind::kSquaredDistance: return "squared-distance";
    case SurrogateKind::kExpertAdvantage: return "expert-advantage";
  }
  return "unknown";
}

SurrogateKind surrogate_kind_from_string(const std::string& name) {
  for (auto k : {SurrogateKind::kKlExpertLearner, SurrogateKind::kSquaredDistance,
                 SurrogateKind::kExpertAdvantage})
    if (name == to_string(k)) return k;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown surrogate kind '{}'", name));
}

void validate(const SurrogateLossSpec& spec) {
  if (spec.c_star && !(*spec.c_star > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "surrogate C_star must be positive");
}

const char* to_string(AdvantageKind kind) {
  switch (kind) {
    case AdvantageKind::kExactDp: return "exact-dp";
    case AdvantageKind::kGae: return "gae";
    case AdvantageKind::kMcTruncated: return "mc-truncated";
  }
  return "unknown";
}

AdvantageKind advantage_kind_from_string(const std::string& name) {
  for (auto k : {AdvantageKind::kExactDp, AdvantageKind::kGae, AdvantageKind::kMcTruncated})
    if (name == to_string(k)) return k;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown advantage kind '{}'", name));
}

void validate(const AdvantageEstimator& est) {
  if (!(est.lambda_gae >= 0.0 && est.lambda_gae <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "advantage estimator: lambda_gae must lie in [0, 1]");
  if (est.horizon_H < 0) throw Error(ErrorCode::kInvalidArgument, "advantage estimator: H must be >= 0");
  if (est.kind == AdvantageKind::kExactDp && est.exact_adv.size() == 0)
    throw Error(ErrorCode::kMissingExpertData, "advantage estimator: exact-dp needs an advantage table");
}

const Eigen::VectorXd& ExpertPolicy::value() const {
  if (value_hat.size()) return value_hat;
  if (exact) return exact->v;
  throw Error(ErrorCode::kMissingExpertData, "expert has neither a fitted nor an exact value");
}

ExpertPolicy make_expert_from_probs(const TabularMdp& mdp, const Eigen::MatrixXd& probs) {
  ExpertPolicy e;
  e.params = PolicyParams::tabular_from_probs(probs);
  e.probs = action_probs(e.params);
  e.exact = exact_eval(mdp, e.probs);
  return e;
}

ExpertPolicy make_tempered_expert(const TabularMdp& mdp, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::kInvalidArgument, "expert temperature must be positive");
  const OptimalSolution opt = solve_optimal(mdp);
  ExpertPolicy e;
  e.params = PolicyParams::tabular_from_logits(-opt.q / temperature);
  e.probs = action_probs(e.params);
  e.exact = exact_eval(mdp, e.probs);
  return e;
}

ExpertPolicy make_lq_expert(const PolicyParams& params) {
  if (params.is_tabular()) throw Error(ErrorCode::kUnsupportedFamily, "LQ expert needs a linear policy");
  ExpertPolicy e;
  e.params = params;
  return e;
}

void fit_expert_value(ExpertPolicy& expert, const TabularMdp& mdp, long transitions,
                      std::uint64_t seed, double ridge) {
  require_expert_probs(expert, mdp, "fit_expert_value");
  if (transitions < 1) throw Error(ErrorCode::kInvalidArgument, "fit_expert_value: need transitions");
  const int T = tail_horizon(mdp);
  const int count = static_cast<int>((transitions + T - 1) / T);
  const auto batch = sample_trajectories(mdp, expert.probs, count, T, seed, 0x5EED);
  ValueFitOptions opt;
  opt.ridge = ridge;
  const AdvantageEstimator fit = fit_value(batch, mdp.num_states, mdp.gamma, opt);
  expert.value_hat = fit.value;
  expert.value_explained_variance = fit.explained_variance;
  expert.value_fit_samples = fit.samples;
}

Eigen::VectorXd exact_likelihood_ratio(const PolicyParams& policy, const Eigen::VectorXd& state_dist,
                                       const Eigen::MatrixXd& signal) {
  const int S = policy.num_states();
  const int A = policy.num_actions();
  if (state_dist.size() != S || signal.rows() != S || signal.cols() != A)
    throw Error(ErrorCode::kDimensionMismatch, "exact likelihood ratio: shapes do not match the policy");
  const Eigen::MatrixXd pi = action_probs(policy);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(policy.theta.size());
  for (int s = 0; s < S; ++s) {
    auto block = g.segment(static_cast<Eigen::Index>(s) * A, A);
    const Eigen::VectorXd p = pi.row(s).transpose();
    for (int a = 0; a < A; ++a) {
      // grad pi(a|s) = pi(a|s) (e_a - pi_s)
      const double w = state_dist(s) * signal(s, a) * p(a);
      block -= w * p;
      block(a) += w;
    }
  }
  return g;
}

OracleGradient sampled_likelihood_ratio(const PolicyParams& policy, double gamma,
                                        const std::vector<Trajectory>& batch,
                                        const std::vector<std::vector<double>>& signals) {
  require_batch(batch, "likelihood ratio");
  return likelihood_ratio(policy, gamma, batch, signals, true);
}

OracleGradient sampled_likelihood_ratio_serial(const PolicyParams& policy, double gamma,
                                               const std::vector<Trajectory>& batch,
                                               const std::vector<std::vector<double>>& signals) {
  require_batch(batch, "likelihood ratio");
  return likelihood_ratio(policy, gamma, batch, signals, false);
}

OracleGradient pg_exact(const TabularMdp& mdp, const PolicyParams& policy) {
  require_tabular_match(mdp, policy, "pg_oracle");
  const ExactSolution sol = exact_eval(mdp, policy);
  return exact_result(exact_likelihood_ratio(policy, sol.state_dist, sol.adv), OracleKind::kPg);
}

OracleGradient pg_oracle(const TabularMdp& mdp, const PolicyParams& policy,
                         const AdvantageEstimator& adv, const std::vector<Trajectory>& batch,
                         OracleMode mode) {
  if (mode == OracleMode::kExact) return pg_exact(mdp, policy);
  require_tabular_match(mdp, policy, "pg_oracle");
  require_batch(batch, "pg_oracle");
  validate(adv);
  std::vector<std::vector<double>> signals(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    signals[i] = estimate_advantages(batch[i], adv, mdp.gamma);
  OracleGradient out = sampled_likelihood_ratio(policy, mdp.gamma, batch, signals);
  out.kind = OracleKind::kPg;
  if (adv.kind != AdvantageKind::kExactDp) out.bias = BiasFlag::kBiasedEstimate;
  return out;
}

BaselinePair baseline_invariance(const TabularMdp& mdp, const PolicyParams& policy,
                                 const Eigen::VectorXd& baseline) {
  require_tabular_match(mdp, policy, "baseline_invariance");
  if (baseline.size() != mdp.num_states)
    throw Error(ErrorCode::kDimensionMismatch, "baseline_invariance: baseline has the wrong size");
  const ExactSolution sol = exact_eval(mdp, policy);
  BaselinePair out;
  out.without_baseline = exact_likelihood_ratio(policy, sol.state_dist, sol.q);
  out.with_baseline = exact_likelihood_ratio(policy, sol.state_dist, sol.q.colwise() - baseline);
  return out;
}

OracleGradient dpg_oracle(const LqTask& task, const PolicyParams& policy) {
  if (policy.family != PolicyFamily::kDeterministicLinear)
    throw Error(ErrorCode::kUnsupportedFamily, "dpg_oracle needs a deterministic-linear policy");
  validate(task);
  const Eigen::MatrixXd K = policy.gain();
  const LqEvaluation ev = lq_evaluate(task, K, Eigen::VectorXd::Zero(task.action_dim()));
  // grad_a Q(x, Kx) = G x with G = 2 (R K + gamma B^T P (A + B K)); the
  // discounted state distribution has second moment (1 - gamma) Sigma_K.
  const Eigen::MatrixXd G =
      2.0 * (task.R * K + task.gamma * task.B.transpose() * ev.value_matrix * (task.A + task.B * K));
  const Eigen::MatrixXd grad = (1.0 - task.gamma) * G * ev.state_moment;
  Eigen::VectorXd g(grad.size());
  for (Eigen::Index i = 0; i < grad.rows(); ++i)
    for (Eigen::Index j = 0; j < grad.cols(); ++j) g(i * grad.cols() + j) = grad(i, j);
  return exact_result(std::move(g), OracleKind::kDpg);
}

OracleGradient daggered_oracle(const TabularMdp& mdp, const PolicyParams& policy,
                               const ExpertPolicy& expert, const SurrogateLossSpec& loss,
                               const std::vector<Trajectory>& batch, OracleMode mode,
                               std::uint64_t query_seed) {
  require_tabular_match(mdp, policy, "daggered_oracle");
  require_expert_probs(expert, mdp, "daggered_oracle");
  validate(loss);
  if (loss.kind == SurrogateKind::kExpertAdvantage)
    throw Error(ErrorCode::kInvalidArgument,
                "daggered_oracle takes kl-expert-learner or squared-distance; use aggrevated_oracle");
  const Eigen::MatrixXd pi = action_probs(policy);
  const Eigen::MatrixXd& pstar = expert.probs;
  const int A = mdp.num_actions;

  if (mode == OracleMode::kExact) {
    const ExactSolution sol = exact_eval(mdp, pi);
    if (loss.kind == SurrogateKind::kSquaredDistance) {
      const Eigen::MatrixXd mismatch = Eigen::MatrixXd::Ones(mdp.num_states, A) - pstar;
      return exact_result(exact_likelihood_ratio(policy, sol.state_dist, mismatch), OracleKind::kDaggered);
    }
    Eigen::VectorXd g(policy.theta.size());
    for (int s = 0; s < mdp.num_states; ++s)
      g.segment(static_cast<Eigen::Index>(s) * A, A) =
          sol.state_dist(s) * (pi.row(s) - pstar.row(s)).transpose();
    return exact_result(std::move(g), OracleKind::kDaggered);
  }

  require_batch(batch, "daggered_oracle");
  OracleGradient out;
  if (loss.kind == SurrogateKind::kKlExpertLearner) {
    // Each visited state queries the full expert distribution.
    out = reduce_batch(policy.theta.size(), A, mdp.gamma, batch, true,
                       [&](int i, std::size_t t, double w, auto block) {
                         const int s = batch[static_cast<std::size_t>(i)].states[t];
                         block += w * (pi.row(s) - pstar.row(s)).transpose();
                       });
  } else {
    std::vector<std::vector<double>> signals(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Trajectory& tr = batch[i];
      signals[i].resize(tr.states.size());
      for (std::size_t t = 0; t < tr.states.size(); ++t) {
        CounterRng rng = CounterRng::stream(query_seed, {static_cast<std::uint64_t>(t), i});
        const int s = tr.states[t];
        const int astar = rng.categorical(std::span<const double>(
            Eigen::VectorXd(pstar.row(s).transpose()).data(), static_cast<std::size_t>(A)));
        signals[i][t] = tr.actions[t] == astar ? 0.0 : 1.0;
      }
    }
    out = likelihood_ratio(policy, mdp.gamma, batch, signals, true);
  }
  out.kind = OracleKind::kDaggered;
  out.expert_queries = out.samples_used;
  return out;
}

OracleGradient daggered_oracle_lq(const LqTask& task, const PolicyParams& policy,
                                  const ExpertPolicy& expert, const SurrogateLossSpec& loss,
                                  const std::vector<LqTrajectory>& batch, int action_samples,
                                  std::uint64_t seed) {
  if (policy.family != PolicyFamily::kLinearGaussian)
    throw Error(ErrorCode::kUnsupportedFamily, "daggered_oracle_lq needs a linear-gaussian policy");
  if (expert.params.is_tabular() || expert.params.action_dim() != policy.action_dim() ||
      expert.params.state_dim() != policy.state_dim())
    throw Error(ErrorCode::kMissingExpertData, "daggered_oracle_lq: expert cannot be queried on this task");
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "daggered_oracle_lq: empty batch");
  if (action_samples < 1) throw Error(ErrorCode::kInvalidArgument, "daggered_oracle_lq: action_samples >= 1");
  validate(loss);
  const double gamma = task.gamma;
  const Eigen::MatrixXd Kstar = expert.params.gain();
  const bool expert_noisy = expert.params.family == PolicyFamily::kLinearGaussian;
  const Eigen::VectorXd sstar =
      expert_noisy ? expert.params.action_std() : Eigen::VectorXd::Zero(policy.action_dim());
  const Eigen::VectorXd sigma = policy.action_std();
  const Eigen::MatrixXd K = policy.gain();
  const int m = policy.action_dim();

  const int M = static_cast<int>(batch.size());
  std::vector<Eigen::VectorXd> parts(static_cast<std::size_t>(M));
  parallel_for(M, [&](int i) {
    const LqTrajectory& tr = batch[static_cast<std::size_t>(i)];
    Eigen::VectorXd g = Eigen::VectorXd::Zero(policy.theta.size());
    double w = 1.0 - gamma;
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      const Eigen::VectorXd& x = tr.states[t];
      CounterRng rng = CounterRng::stream(seed, {static_cast<std::uint64_t>(i), t});
      if (loss.kind == SurrogateKind::kSquaredDistance) {
        Eigen::VectorXd astar = Kstar * x;
        for (int k = 0; k < m; ++k) astar(k) += sstar(k) * rng.normal();
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(g.size());
        for (int j = 0; j < action_samples; ++j) {
          Eigen::VectorXd eps(m);
          for (int k = 0; k < m; ++k) eps(k) = rng.normal();
          const ReparamSample rs = reparam_sample(policy, x, eps);
          acc += rs.pullback(2.0 * (rs.action - astar));
        }
        g += (w / action_samples) * acc;
      } else if (loss.kind == SurrogateKind::kKlExpertLearner) {
        const Eigen::VectorXd mu = K * x;
        const Eigen::VectorXd mustar = Kstar * x;
        for (int k = 0; k < m; ++k) {
          const double s2 = sigma(k) * sigma(k);
          const double dmu = (mu(k) - mustar(k)) / s2;
          for (int j = 0; j < policy.state_dim(); ++j) g(k * policy.state_dim() + j) += w * dmu * x(j);
          const double diff = mustar(k) - mu(k);
          g(m * policy.state_dim() + k) += w * (1.0 - (sstar(k) * sstar(k) + diff * diff) / s2);
        }
      } else {
        throw Error(ErrorCode::kInvalidArgument, "daggered_oracle_lq: unsupported surrogate");
      }
      w *= gamma;
    }
    parts[static_cast<std::size_t>(i)] = std::move(g);
  });
  OracleGradient out;
  out.g = tree_sum(parts) / static_cast<double>(M);
  for (const auto& tr : batch) out.samples_used += static_cast<long>(tr.states.size());
  if (M > 1) {
    double ss = 0.0;
    for (const auto& p : parts) ss += (p - out.g).squaredNorm();
    out.empirical_variance = ss / (static_cast<double>(M) * (M - 1));
  }
  out.kind = OracleKind::kDaggered;
  out.bias = BiasFlag::kUnbiasedEstimate;
  out.expert_queries = out.samples_used;
  return out;
}

OracleGradient aggrevated_oracle(const TabularMdp& mdp, const PolicyParams& policy,
                                 const ExpertPolicy& expert, const std::vector<Trajectory>& batch,
                                 OracleMode mode) {
  require_tabular_match(mdp, policy, "aggrevated_oracle");
  if (mode == OracleMode::kExact) {
    const ExactSolution& star = require_expert_exact(expert, "aggrevated_oracle");
    const ExactSolution sol = exact_eval(mdp, policy);
    return exact_result(exact_likelihood_ratio(policy, sol.state_dist, star.adv), OracleKind::kAggrevated);
  }
  require_batch(batch, "aggrevated_oracle");
  const Eigen::VectorXd& v = expert.value();
  if (v.size() != mdp.num_states)
    throw Error(ErrorCode::kMissingExpertData, "aggrevated_oracle: expert value has the wrong size");
  OracleGradient out = likelihood_ratio(policy, mdp.gamma, batch, td_residuals(batch, v, mdp.gamma), true);
  out.kind = OracleKind::kAggrevated;
  if (expert.value_hat.size()) out.bias = BiasFlag::kBiasedEstimate;
  return out;
}

OracleGradient slols_oracle(const TabularMdp& mdp, const PolicyParams& policy,
                            const ExpertPolicy& expert, const AdvantageEstimator& adv,
                            double lambda, const std::vector<Trajectory>& batch, OracleMode mode) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "slols_oracle: lambda must lie in [0, 1]");
  const OracleGradient pg = pg_oracle(mdp, policy, adv, batch, mode);
  const OracleGradient ag = aggrevated_oracle(mdp, policy, expert, batch, mode);
  return combine(pg, ag, lambda, OracleKind::kSlols);
}

std::vector<std::vector<double>> thor_signals(const std::vector<Trajectory>& batch,
                                              const Eigen::VectorXd& expert_value, double gamma,
                                              int H) {
  std::vector<std::vector<double>> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    out[i] = truncated_advantage(batch[i], expert_value, gamma, H);
  return out;
}

OracleGradient thor_oracle(const TabularMdp& mdp, const PolicyParams& policy,
                           const ExpertPolicy& expert, int H, const std::vector<Trajectory>& batch,
                           bool baseline) {
  require_tabular_match(mdp, policy, "thor_oracle");
  require_batch(batch, "thor_oracle");
  if (H < 1) throw Error(ErrorCode::kInvalidArgument, "thor_oracle: H must be >= 1");
  const Eigen::VectorXd& v = expert.value();
  if (v.size() != mdp.num_states)
    throw Error(ErrorCode::kMissingExpertData, "thor_oracle: expert value has the wrong size");
  auto signals = thor_signals(batch, v, mdp.gamma, H);
  if (baseline) {
    std::vector<int> states;
    std::vector<double> targets;
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (std::size_t t = 0; t < signals[i].size(); ++t) {
        states.push_back(batch[i].states[t]);
        targets.push_back(signals[i][t]);
      }
    const Eigen::VectorXd b = fit_value_targets(states, targets, mdp.num_states).value;
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (std::size_t t = 0; t < signals[i].size(); ++t) signals[i][t] -= b(batch[i].states[t]);
  }
  OracleGradient out = likelihood_ratio(policy, mdp.gamma, batch, signals, true);
  out.kind = OracleKind::kThor;
  if (baseline || expert.value_hat.size()) out.bias = BiasFlag::kBiasedEstimate;
  return out;
}

double empirical_surrogate_constant(const ExpertPolicy& expert,
                                    const std::vector<Eigen::MatrixXd>& policies, double min_kl) {
  if (!expert.exact) throw Error(ErrorCode::kMissingExpertData, "surrogate constant needs the expert's exact advantage");
  const Eigen::MatrixXd& adv = expert.exact->adv;
  const Eigen::MatrixXd& pstar = expert.probs;
  double best = 0.0;
  for (const auto& pi : policies) {
    if (pi.rows() != pstar.rows() || pi.cols() != pstar.cols())
      throw Error(ErrorCode::kDimensionMismatch, "surrogate constant: policy shape mismatch");
    for (Eigen::Index s = 0; s < pi.rows(); ++s) {
      double kl = 0.0;
      for (Eigen::Index a = 0; a < pi.cols(); ++a)
        if (pstar(s, a) > 0.0) kl += pstar(s, a) * std::log(pstar(s, a) / pi(s, a));
      if (kl <= min_kl) continue;
      const double gain = pi.row(s).dot(adv.row(s));
      best = std::max(best, gain / kl);
    }
  }
  return best;
}

}  // namespace lokilab
