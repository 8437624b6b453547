#include "lokilab/sampling.hpp"

#include <cmath>
#include <span>

#include <fmt/format.h>

#include "lokilab/error.hpp"
#include "lokilab/parallel.hpp"

namespace lokilab {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TabularSampler {
  const TabularMdp& mdp;
  RowMatrix transition;
  RowMatrix probs;
  RowMatrix log_probs;

  TabularSampler(const TabularMdp& m, const Eigen::MatrixXd& policy_probs)
      : mdp(m), transition(m.transition), probs(policy_probs),
        log_probs(policy_probs.array().log().matrix()) {
    if (policy_probs.rows() != m.num_states || policy_probs.cols() != m.num_actions)
      throw Error(ErrorCode::kDimensionMismatch, "sampling: policy shape does not match the MDP");
  }

  int initial(CounterRng& rng) const {
    return rng.categorical(std::span<const double>(mdp.initial_dist.data(), mdp.num_states));
  }
  int action(int s, CounterRng& rng) const {
    return rng.categorical(std::span<const double>(probs.row(s).data(), mdp.num_actions));
  }
  int next(int s, int a, CounterRng& rng) const {
    return rng.categorical(
        std::span<const double>(transition.row(mdp.row(s, a)).data(), mdp.num_states));
  }

  Trajectory rollout(int horizon, CounterRng rng) const {
    Trajectory tr;
    tr.horizon = horizon;
    tr.states.reserve(static_cast<std::size_t>(horizon));
    tr.actions.reserve(static_cast<std::size_t>(horizon));
    tr.costs.reserve(static_cast<std::size_t>(horizon));
    tr.log_probs.reserve(static_cast<std::size_t>(horizon));
    int s = initial(rng);
    for (int t = 0; t < horizon; ++t) {
      const int a = action(s, rng);
      tr.states.push_back(s);
      tr.actions.push_back(a);
      tr.costs.push_back(mdp.cost(s, a));
      tr.log_probs.push_back(log_probs(s, a));
      s = next(s, a, rng);
    }
    tr.final_state = s;
    return tr;
  }
};

void check_counts(int count, int horizon) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "sampling: count must be >= 1");
  if (horizon < 1) throw Error(ErrorCode::kInvalidArgument, "sampling: horizon must be >= 1");
}

struct LqSampler {
  const LqTask& task;
  Eigen::MatrixXd init_chol;
  Eigen::MatrixXd gain;
  Eigen::VectorXd sigma;
  bool gaussian;
  const PolicyParams& policy;

  LqSampler(const LqTask& t, const PolicyParams& p) : task(t), policy(p) {
    if (p.is_tabular())
      throw Error(ErrorCode::kUnsupportedFamily, "LQ sampling needs a linear policy");
    if (p.action_dim() != t.action_dim() || p.state_dim() != t.state_dim())
      throw Error(ErrorCode::kDimensionMismatch, "LQ sampling: policy shape does not match the task");
    init_chol = t.init_cov.llt().matrixL();
    gain = p.gain();
    gaussian = p.family == PolicyFamily::kLinearGaussian;
    sigma = gaussian ? p.action_std() : Eigen::VectorXd::Zero(t.action_dim());
  }

  Eigen::VectorXd normals(Eigen::Index n, CounterRng& rng) const {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
    return z;
  }

  LqTrajectory rollout(int horizon, CounterRng rng) const {
    LqTrajectory tr;
    tr.horizon = horizon;
    Eigen::VectorXd x = init_chol * normals(task.state_dim(), rng);
    for (int t = 0; t < horizon; ++t) {
      Eigen::VectorXd eps = gaussian ? normals(task.action_dim(), rng)
                                     : Eigen::VectorXd::Zero(task.action_dim());
      Eigen::VectorXd u = gain * x + sigma.cwiseProduct(eps);
      tr.costs.push_back(x.dot(task.Q * x) + u.dot(task.R * u));
      tr.log_probs.push_back(gaussian ? log_prob(policy, x, u) : 0.0);
      Eigen::VectorXd next = task.A * x + task.B * u;
      tr.states.push_back(std::move(x));
      tr.actions.push_back(std::move(u));
      tr.noises.push_back(std::move(eps));
      if (!next.allFinite() || next.cwiseAbs().maxCoeff() > kLqOverflowGuard)
        throw DivergedRollout(t + 1, fmt::format("LQ rollout left the overflow guard at step {}", t + 1));
      x = std::move(next);
    }
    tr.final_state = std::move(x);
    return tr;
  }
};

}  // namespace

int tail_horizon(double gamma, double max_abs_cost, double tol) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error(ErrorCode::kInvalidArgument, "tail_horizon: gamma");
  if (gamma == 0.0 || max_abs_cost == 0.0) return 1;
  const double ratio = tol * (1.0 - gamma) / max_abs_cost;
  if (ratio >= 1.0) return 1;
  return std::max(1, static_cast<int>(std::ceil(std::log(ratio) / std::log(gamma))));
}

int tail_horizon(const TabularMdp& mdp, double tol) {
  return tail_horizon(mdp.gamma, mdp.max_abs_cost(), tol);
}

std::vector<Trajectory> sample_trajectories(const TabularMdp& mdp,
                                            const Eigen::MatrixXd& policy_probs, int count,
                                            int horizon, std::uint64_t seed, std::uint64_t stream) {
  check_counts(count, horizon);
  const TabularSampler sampler(mdp, policy_probs);
  std::vector<Trajectory> out(static_cast<std::size_t>(count));
  parallel_for(count, [&](int i) {
    out[static_cast<std::size_t>(i)] =
        sampler.rollout(horizon, CounterRng::stream(seed, {stream, static_cast<std::uint64_t>(i)}));
  });
  return out;
}

std::vector<Trajectory> sample_trajectories(const TabularMdp& mdp, const PolicyParams& policy,
                                            int count, int horizon, std::uint64_t seed,
                                            std::uint64_t stream) {
  if (!policy.is_tabular())
    throw Error(ErrorCode::kUnsupportedFamily, "tabular sampling needs a tabular-softmax policy");
  return sample_trajectories(mdp, action_probs(policy), count, horizon, seed, stream);
}

std::vector<Trajectory> sample_trajectories_serial(const TabularMdp& mdp,
                                                   const Eigen::MatrixXd& policy_probs, int count,
                                                   int horizon, std::uint64_t seed,
                                                   std::uint64_t stream) {
  check_counts(count, horizon);
  const TabularSampler sampler(mdp, policy_probs);
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(
        sampler.rollout(horizon, CounterRng::stream(seed, {stream, static_cast<std::uint64_t>(i)})));
  return out;
}

double discounted_return(const Trajectory& traj, double gamma) {
  double total = 0.0;
  double w = 1.0;
  for (double c : traj.costs) {
    total += w * c;
    w *= gamma;
  }
  return total;
}

double mean_discounted_return(const std::vector<Trajectory>& batch, double gamma) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  double total = 0.0;
  for (const auto& tr : batch) total += discounted_return(tr, gamma);
  return total / static_cast<double>(batch.size());
}

DiscountedDraw sample_discounted_state(const TabularMdp& mdp, const Eigen::MatrixXd& policy_probs,
                                       CounterRng& rng) {
  const TabularSampler sampler(mdp, policy_probs);
  DiscountedDraw d;
  d.time = rng.geometric(1.0 - mdp.gamma);
  int s = sampler.initial(rng);
  for (int t = 0; t < d.time; ++t) s = sampler.next(s, sampler.action(s, rng), rng);
  d.state = s;
  return d;
}

std::vector<LqTrajectory> sample_lq_trajectories(const LqTask& task, const PolicyParams& policy,
                                                 int count, int horizon, std::uint64_t seed,
                                                 std::uint64_t stream) {
  check_counts(count, horizon);
  const LqSampler sampler(task, policy);
  std::vector<LqTrajectory> out(static_cast<std::size_t>(count));
  parallel_for(count, [&](int i) {
    out[static_cast<std::size_t>(i)] =
        sampler.rollout(horizon, CounterRng::stream(seed, {stream, static_cast<std::uint64_t>(i)}));
  });
  return out;
}

std::vector<LqTrajectory> sample_lq_trajectories_serial(const LqTask& task,
                                                        const PolicyParams& policy, int count,
                                                        int horizon, std::uint64_t seed,
                                                        std::uint64_t stream) {
  check_counts(count, horizon);
  const LqSampler sampler(task, policy);
  std::vector<LqTrajectory> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(
        sampler.rollout(horizon, CounterRng::stream(seed, {stream, static_cast<std::uint64_t>(i)})));
  return out;
}

}  // namespace lokilab
