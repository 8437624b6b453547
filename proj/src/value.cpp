#include <cmath>

#include <fmt/format.h>

#include "lokilab/error.hpp"
#include "lokilab/oracles.hpp"

namespace lokilab {
namespace {

struct Transition {
  int s;
  double c;
  int next;
};

std::vector<Transition> flatten(const std::vector<Trajectory>& batch) {
  std::vector<Transition> out;
  for (const auto& tr : batch)
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      const int next = t + 1 < tr.states.size() ? tr.states[t + 1] : tr.final_state;
      out.push_back({tr.states[t], tr.costs[t], next});
    }
  return out;
}

Eigen::VectorXd lstd(const std::vector<Transition>& data, int parity, int num_states, double gamma,
                     double ridge, const Eigen::VectorXd& prior) {
  Eigen::MatrixXd A = ridge * Eigen::MatrixXd::Identity(num_states, num_states);
  Eigen::VectorXd b = ridge * prior;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (parity >= 0 && static_cast<int>(i % 2) != parity) continue;
    const auto& tr = data[i];
    A(tr.s, tr.s) += 1.0;
    A(tr.s, tr.next) -= gamma;
    b(tr.s) += tr.c;
  }
  return A.partialPivLu().solve(b);
}

// Held-out fold `parity`: per-state mean TD(0) target against the prediction.
void accumulate_heldout(const std::vector<Transition>& data, int parity, const Eigen::VectorXd& w,
                        double gamma, std::vector<double>& y, std::vector<double>& pred,
                        std::vector<double>& weight) {
  const auto S = w.size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(S);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(S);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (static_cast<int>(i % 2) != parity) continue;
    sum(data[i].s) += data[i].c + gamma * w(data[i].next);
    count(data[i].s) += 1.0;
  }
  for (Eigen::Index s = 0; s < S; ++s)
    if (count(s) > 0.0) {
      y.push_back(sum(s) / count(s));
      pred.push_back(w(s));
      weight.push_back(count(s));
    }
}

double explained_variance(const std::vector<double>& y, const std::vector<double>& pred,
                          const std::vector<double>& weight) {
  double total_w = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    total_w += weight[i];
    mean += weight[i] * y[i];
  }
  mean /= total_w;
  double resid = 0.0;
  double spread = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    resid += weight[i] * (y[i] - pred[i]) * (y[i] - pred[i]);
    spread += weight[i] * (y[i] - mean) * (y[i] - mean);
  }
  if (spread == 0.0) return resid == 0.0 ? 1.0 : 0.0;
  return 1.0 - resid / spread;
}

}  // namespace

AdvantageEstimator fit_value(const std::vector<Trajectory>& batch, int num_states, double gamma,
                             const ValueFitOptions& options) {
  const std::vector<Transition> data = flatten(batch);
  if (data.empty()) throw Error(ErrorCode::kInvalidArgument, "fit_value: empty dataset");
  if (!(options.ridge > 0.0)) throw Error(ErrorCode::kInvalidArgument, "fit_value: ridge must be positive");
  const Eigen::VectorXd prior =
      options.prior.size() ? options.prior : Eigen::VectorXd::Zero(num_states);
  if (prior.size() != num_states)
    throw Error(ErrorCode::kDimensionMismatch, "fit_value: prior has the wrong size");

  AdvantageEstimator est;
  est.value = lstd(data, -1, num_states, gamma, options.ridge, prior);
  est.samples = static_cast<long>(data.size());
  if (options.cross_fit && data.size() >= 2) {
    std::vector<double> y, pred, weight;
    for (int fold = 0; fold < 2; ++fold) {
      const Eigen::VectorXd w = lstd(data, 1 - fold, num_states, gamma, options.ridge, prior);
      accumulate_heldout(data, fold, w, gamma, y, pred, weight);
    }
    est.explained_variance = explained_variance(y, pred, weight);
  }
  return est;
}

AdvantageEstimator fit_value_targets(const std::vector<int>& states,
                                     const std::vector<double>& targets, int num_states) {
  if (states.empty()) throw Error(ErrorCode::kInvalidArgument, "fit_value_targets: empty dataset");
  if (states.size() != targets.size())
    throw Error(ErrorCode::kDimensionMismatch, "fit_value_targets: states and targets differ in length");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(num_states);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(num_states);
  for (std::size_t i = 0; i < states.size(); ++i) {
    sum(states[i]) += targets[i];
    count(states[i]) += 1.0;
  }
  AdvantageEstimator est;
  est.value = Eigen::VectorXd::Zero(num_states);
  for (int s = 0; s < num_states; ++s)
    if (count(s) > 0.0) est.value(s) = sum(s) / count(s);
  std::vector<double> pred(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) pred[i] = est.value(states[i]);
  est.explained_variance = explained_variance(targets, pred, std::vector<double>(states.size(), 1.0));
  est.samples = static_cast<long>(states.size());
  return est;
}

AdvantageEstimator exact_value_estimator(const ExactSolution& sol) {
  AdvantageEstimator est;
  est.kind = AdvantageKind::kExactDp;
  est.value = sol.v;
  est.exact_adv = sol.adv;
  est.explained_variance = 1.0;
  return est;
}

std::vector<double> gae(const Trajectory& traj, const Eigen::VectorXd& value, double gamma,
                        double lambda_gae) {
  if (!(lambda_gae >= 0.0 && lambda_gae <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "gae: lambda must lie in [0, 1]");
  const std::size_t T = traj.states.size();
  std::vector<double> adv(T);
  double running = 0.0;
  for (std::size_t k = T; k-- > 0;) {
    const int next = k + 1 < T ? traj.states[k + 1] : traj.final_state;
    const double delta = traj.costs[k] + gamma * value(next) - value(traj.states[k]);
    running = delta + gamma * lambda_gae * running;
    adv[k] = running;
  }
  return adv;
}

std::vector<double> truncated_advantage(const Trajectory& traj, const Eigen::VectorXd& value,
                                        double gamma, int H) {
  if (H < 1) throw Error(ErrorCode::kInvalidArgument, "truncated advantage: H must be >= 1");
  const int T = static_cast<int>(traj.states.size());
  if (H > T)
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("truncated advantage: H = {} exceeds the rollout horizon {}", H, T));
  std::vector<double> adv(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const int h = std::min(H, T - t);
    double sum = 0.0;
    double disc = 1.0;
    for (int k = 0; k < h; ++k) {
      sum += disc * traj.costs[static_cast<std::size_t>(t + k)];
      disc *= gamma;
    }
    const int end = t + h < T ? traj.states[static_cast<std::size_t>(t + h)] : traj.final_state;
    adv[static_cast<std::size_t>(t)] = sum + disc * value(end) - value(traj.states[static_cast<std::size_t>(t)]);
  }
  return adv;
}

std::vector<double> estimate_advantages(const Trajectory& traj, const AdvantageEstimator& est,
                                        double gamma) {
  switch (est.kind) {
    case AdvantageKind::kExactDp: {
      std::vector<double> adv(traj.states.size());
      for (std::size_t t = 0; t < adv.size(); ++t) adv[t] = est.exact_adv(traj.states[t], traj.actions[t]);
      return adv;
    }
    case AdvantageKind::kGae: return gae(traj, est.value, gamma, est.lambda_gae);
    case AdvantageKind::kMcTruncated:
      if (est.horizon_H == 0) return gae(traj, est.value, gamma, 1.0);
      return truncated_advantage(traj, est.value, gamma,
                                 std::min<int>(est.horizon_H, static_cast<int>(traj.states.size())));
  }
  return {};
}

}  // namespace lokilab
