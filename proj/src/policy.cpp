#include "lokilab/policy.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "lokilab/error.hpp"

namespace lokilab {
namespace {

void require_tabular(const PolicyParams& p, const char* op) {
  if (!p.is_tabular())
    throw Error(ErrorCode::kUnsupportedFamily,
                fmt::format("{}: needs tabular-softmax, got {}", op, to_string(p.family)));
}

void require_gaussian(const PolicyParams& p, const char* op) {
  if (p.family != PolicyFamily::kLinearGaussian)
    throw Error(ErrorCode::kUnsupportedFamily,
                fmt::format("{}: needs linear-gaussian, got {}", op, to_string(p.family)));
}

void require_state(const PolicyParams& p, int s) {
  if (s < 0 || s >= p.rows)
    throw Error(ErrorCode::kDimensionMismatch, fmt::format("state {} out of range", s));
}

Eigen::Index expected_size(PolicyFamily family, int rows, int cols) {
  const Eigen::Index base = static_cast<Eigen::Index>(rows) * cols;
  return family == PolicyFamily::kLinearGaussian ? base + rows : base;
}

}  // namespace

const char* to_string(PolicyFamily family) {
  switch (family) {
    case PolicyFamily::kTabularSoftmax: return "tabular-softmax";
    case PolicyFamily::kLinearGaussian: return "linear-gaussian";
    case PolicyFamily::kDeterministicLinear: return "deterministic-linear";
  }
  return "unknown";
}

PolicyFamily policy_family_from_string(const std::string& name) {
  if (name == "tabular-softmax") return PolicyFamily::kTabularSoftmax;
  if (name == "linear-gaussian") return PolicyFamily::kLinearGaussian;
  if (name == "deterministic-linear") return PolicyFamily::kDeterministicLinear;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown policy family '{}'", name));
}

PolicyParams PolicyParams::tabular(int num_states, int num_actions) {
  if (num_states <= 0 || num_actions <= 0)
    throw Error(ErrorCode::kInvalidArgument, "tabular policy needs positive sizes");
  PolicyParams p;
  p.family = PolicyFamily::kTabularSoftmax;
  p.rows = num_states;
  p.cols = num_actions;
  p.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_states) * num_actions);
  return p;
}

PolicyParams PolicyParams::tabular_from_logits(const Eigen::MatrixXd& logits) {
  PolicyParams p = tabular(static_cast<int>(logits.rows()), static_cast<int>(logits.cols()));
  for (int s = 0; s < p.rows; ++s)
    for (int a = 0; a < p.cols; ++a) p.theta(s * p.cols + a) = logits(s, a);
  return p;
}

PolicyParams PolicyParams::tabular_from_probs(const Eigen::MatrixXd& probs) {
  if (probs.minCoeff() <= 0.0)
    throw Error(ErrorCode::kInvalidArgument, "softmax logits need strictly positive probabilities");
  Eigen::MatrixXd logits = probs.array().log().matrix();
  for (int s = 0; s < logits.rows(); ++s) logits.row(s).array() -= logits.row(s).mean();
  return tabular_from_logits(logits);
}

PolicyParams PolicyParams::linear_gaussian(const Eigen::MatrixXd& gain,
                                           const Eigen::VectorXd& log_std) {
  if (log_std.size() != gain.rows())
    throw Error(ErrorCode::kDimensionMismatch, "log_std size must equal action_dim");
  PolicyParams p;
  p.family = PolicyFamily::kLinearGaussian;
  p.rows = static_cast<int>(gain.rows());
  p.cols = static_cast<int>(gain.cols());
  p.theta.resize(expected_size(p.family, p.rows, p.cols));
  for (int i = 0; i < p.rows; ++i)
    for (int j = 0; j < p.cols; ++j) p.theta(i * p.cols + j) = gain(i, j);
  p.theta.tail(p.rows) = log_std;
  validate(p);
  return p;
}

PolicyParams PolicyParams::deterministic_linear(const Eigen::MatrixXd& gain) {
  PolicyParams p;
  p.family = PolicyFamily::kDeterministicLinear;
  p.rows = static_cast<int>(gain.rows());
  p.cols = static_cast<int>(gain.cols());
  p.theta.resize(expected_size(p.family, p.rows, p.cols));
  for (int i = 0; i < p.rows; ++i)
    for (int j = 0; j < p.cols; ++j) p.theta(i * p.cols + j) = gain(i, j);
  return p;
}

Eigen::MatrixXd PolicyParams::logits() const {
  require_tabular(*this, "logits");
  Eigen::MatrixXd out(rows, cols);
  for (int s = 0; s < rows; ++s)
    for (int a = 0; a < cols; ++a) out(s, a) = theta(s * cols + a);
  return out;
}

Eigen::MatrixXd PolicyParams::gain() const {
  if (is_tabular()) throw Error(ErrorCode::kUnsupportedFamily, "gain: tabular policy has no gain");
  Eigen::MatrixXd out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = theta(i * cols + j);
  return out;
}

Eigen::VectorXd PolicyParams::log_std() const {
  require_gaussian(*this, "log_std");
  return theta.tail(rows);
}

Eigen::VectorXd PolicyParams::action_std() const {
  if (family == PolicyFamily::kDeterministicLinear) return Eigen::VectorXd::Zero(rows);
  return log_std().array().exp().matrix();
}

void validate(const PolicyParams& policy) {
  if (policy.rows <= 0 || policy.cols <= 0)
    throw Error(ErrorCode::kInvalidArgument, "policy shape must be positive");
  if (policy.theta.size() != expected_size(policy.family, policy.rows, policy.cols))
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("theta has {} entries, {} needs {}", policy.theta.size(),
                            to_string(policy.family),
                            expected_size(policy.family, policy.rows, policy.cols)));
  if (!policy.theta.allFinite()) throw Error(ErrorCode::kInvalidArgument, "theta is not finite");
  if (policy.family == PolicyFamily::kLinearGaussian) {
    const Eigen::VectorXd ls = policy.theta.tail(policy.rows);
    if (ls.minCoeff() < kMinLogStd || ls.maxCoeff() > kMaxLogStd)
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("log-std outside [{}, {}]", kMinLogStd, kMaxLogStd));
  }
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index s = 0; s < logits.rows(); ++s) {
    const double m = logits.row(s).maxCoeff();
    out.row(s) = (logits.row(s).array() - m).unaryExpr([](double v) { return std::exp(v); }).matrix();
    out.row(s) /= out.row(s).sum();
  }
  return out;
}

Eigen::MatrixXd action_probs(const PolicyParams& policy) {
  return softmax_rows(policy.logits());
}

Eigen::VectorXd action_probs(const PolicyParams& policy, int state) {
  require_tabular(policy, "action_probs");
  require_state(policy, state);
  Eigen::VectorXd z = policy.theta.segment(static_cast<Eigen::Index>(state) * policy.cols, policy.cols);
  z.array() -= z.maxCoeff();
  z = z.unaryExpr([](double v) { return std::exp(v); });
  return z / z.sum();
}

Eigen::VectorXd log_prob_grad(const PolicyParams& policy, int state, int action) {
  require_tabular(policy, "log_prob_grad");
  require_state(policy, state);
  if (action < 0 || action >= policy.cols)
    throw Error(ErrorCode::kDimensionMismatch, fmt::format("action {} out of range", action));
  const Eigen::VectorXd pi = action_probs(policy, state);
  if (pi(action) <= 0.0)
    throw Error(ErrorCode::kZeroProbabilityAction,
                fmt::format("action {} has zero probability in state {}", action, state));
  Eigen::VectorXd g = Eigen::VectorXd::Zero(policy.theta.size());
  auto block = g.segment(static_cast<Eigen::Index>(state) * policy.cols, policy.cols);
  block = -pi;
  block(action) += 1.0;
  return g;
}

double log_prob(const PolicyParams& policy, int state, int action) {
  const Eigen::VectorXd pi = action_probs(policy, state);
  return std::log(pi(action));
}

Eigen::VectorXd log_prob_grad(const PolicyParams& policy, const Eigen::VectorXd& state,
                              const Eigen::VectorXd& action) {
  require_gaussian(policy, "log_prob_grad");
  const Eigen::MatrixXd K = policy.gain();
  const Eigen::VectorXd sigma = policy.action_std();
  const Eigen::VectorXd z = ((action - K * state).array() / sigma.array()).matrix();
  Eigen::VectorXd g(policy.theta.size());
  for (int i = 0; i < policy.rows; ++i) {
    for (int j = 0; j < policy.cols; ++j) g(i * policy.cols + j) = z(i) / sigma(i) * state(j);
    g(policy.rows * policy.cols + i) = z(i) * z(i) - 1.0;
  }
  return g;
}

double log_prob(const PolicyParams& policy, const Eigen::VectorXd& state,
                const Eigen::VectorXd& action) {
  require_gaussian(policy, "log_prob");
  const Eigen::VectorXd sigma = policy.action_std();
  const Eigen::VectorXd z = ((action - policy.gain() * state).array() / sigma.array()).matrix();
  return -0.5 * z.squaredNorm() - policy.log_std().sum() -
         0.5 * static_cast<double>(policy.rows) * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd ReparamSample::pullback(const Eigen::VectorXd& df_da) const {
  const auto rows = action.size();
  const auto cols = state.size();
  Eigen::VectorXd g(rows * cols + rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) g(i * cols + j) = df_da(i) * state(j);
    g(rows * cols + i) = df_da(i) * sigma(i) * noise(i);
  }
  return g;
}

ReparamSample reparam_sample(const PolicyParams& policy, const Eigen::VectorXd& state,
                             const Eigen::VectorXd& noise) {
  require_gaussian(policy, "reparam_sample");
  if (state.size() != policy.cols || noise.size() != policy.rows)
    throw Error(ErrorCode::kDimensionMismatch, "reparam_sample: state or noise has the wrong size");
  ReparamSample out;
  out.state = state;
  out.noise = noise;
  out.sigma = policy.action_std();
  out.action = policy.gain() * state + out.sigma.cwiseProduct(noise);
  return out;
}

Eigen::MatrixXd fisher_matrix(const PolicyParams& policy, const Eigen::VectorXd& state_weights) {
  require_tabular(policy, "fisher_matrix");
  if (state_weights.size() != policy.rows)
    throw Error(ErrorCode::kDimensionMismatch, "fisher_matrix: weight vector has the wrong size");
  const int A = policy.cols;
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(policy.theta.size(), policy.theta.size());
  const Eigen::MatrixXd pi = action_probs(policy);
  for (int s = 0; s < policy.rows; ++s) {
    const Eigen::VectorXd p = pi.row(s).transpose();
    Eigen::MatrixXd block = -p * p.transpose();
    block.diagonal() += p;
    F.block(static_cast<Eigen::Index>(s) * A, static_cast<Eigen::Index>(s) * A, A, A) =
        state_weights(s) * block;
  }
  return F;
}

Eigen::MatrixXd fisher_matrix_gaussian(const PolicyParams& policy,
                                       const Eigen::MatrixXd& state_second_moment) {
  require_gaussian(policy, "fisher_matrix_gaussian");
  const int m = policy.rows;
  const int n = policy.cols;
  if (state_second_moment.rows() != n || state_second_moment.cols() != n)
    throw Error(ErrorCode::kDimensionMismatch, "state second moment has the wrong shape");
  const Eigen::VectorXd sigma = policy.action_std();
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(policy.theta.size(), policy.theta.size());
  for (int i = 0; i < m; ++i) {
    F.block(static_cast<Eigen::Index>(i) * n, static_cast<Eigen::Index>(i) * n, n, n) =
        state_second_moment / (sigma(i) * sigma(i));
    F(static_cast<Eigen::Index>(m) * n + i, static_cast<Eigen::Index>(m) * n + i) = 2.0;
  }
  return F;
}

nlohmann::json to_json(const PolicyParams& policy) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["family"] = to_string(policy.family);
  j["shape"] = {policy.rows, policy.cols};
  j["theta"] = std::vector<double>(policy.theta.data(), policy.theta.data() + policy.theta.size());
  return j;
}

PolicyParams policy_from_json(const nlohmann::json& j) {
  PolicyParams p;
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("unsupported checkpoint format_version {}", version));
    p.family = policy_family_from_string(j.at("family").get<std::string>());
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 2) throw Error(ErrorCode::kInvalidArgument, "shape needs two entries");
    p.rows = shape[0];
    p.cols = shape[1];
    const auto theta = j.at("theta").get<std::vector<double>>();
    p.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("malformed checkpoint: {}", e.what()));
  }
  validate(p);
  return p;
}

void save_policy(const PolicyParams& policy, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << to_json(policy).dump() << '\n';
}

PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: {}", path.string(), e.what()));
  }
  return policy_from_json(j);
}

}  // namespace lokilab
