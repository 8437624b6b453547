#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>

#include "json.hpp"

namespace lokilab {

enum class PolicyFamily { kTabularSoftmax, kLinearGaussian, kDeterministicLinear };

const char* to_string(PolicyFamily family);
PolicyFamily policy_family_from_string(const std::string& name);

inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 2.0;

/// Flat parameter vector plus the shape that binds it to a policy.
///
/// Tabular softmax: `rows` states x `cols` actions of logits, index s*cols+a.
/// Linear families: gain K (`rows` = action_dim, `cols` = state_dim) stored
/// row-major, mean action K x; linear-gaussian appends `rows` log-stds.
struct PolicyParams {
  PolicyFamily family = PolicyFamily::kTabularSoftmax;
  Eigen::VectorXd theta;
  int rows = 0;
  int cols = 0;

  static PolicyParams tabular(int num_states, int num_actions);
  static PolicyParams tabular_from_logits(const Eigen::MatrixXd& logits);
  /// Logits log(p) centered per state; probabilities must be positive.
  static PolicyParams tabular_from_probs(const Eigen::MatrixXd& probs);
  static PolicyParams linear_gaussian(const Eigen::MatrixXd& gain,
                                      const Eigen::VectorXd& log_std);
  static PolicyParams deterministic_linear(const Eigen::MatrixXd& gain);

  bool is_tabular() const { return family == PolicyFamily::kTabularSoftmax; }
  int num_states() const { return rows; }
  int num_actions() const { return cols; }
  int action_dim() const { return rows; }
  int state_dim() const { return cols; }

  Eigen::MatrixXd logits() const;
  Eigen::MatrixXd gain() const;
  Eigen::VectorXd log_std() const;
  Eigen::VectorXd action_std() const;
};

/// Throws unless theta is finite and sized for the family, and log-stds sit
/// inside [kMinLogStd, kMaxLogStd].
void validate(const PolicyParams& policy);

/// Row-wise softmax (S x A); each row sums to 1 within 1e-12.
Eigen::MatrixXd action_probs(const PolicyParams& policy);
Eigen::VectorXd action_probs(const PolicyParams& policy, int state);
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

/// Gradient of log pi(a|s) for tabular softmax: indicator(a) - pi(.|s) on the
/// logit block of s, zero elsewhere.
Eigen::VectorXd log_prob_grad(const PolicyParams& policy, int state, int action);
/// Gradient of the Gaussian log-density at (x, a).
Eigen::VectorXd log_prob_grad(const PolicyParams& policy, const Eigen::VectorXd& state,
                              const Eigen::VectorXd& action);
double log_prob(const PolicyParams& policy, int state, int action);
double log_prob(const PolicyParams& policy, const Eigen::VectorXd& state,
                const Eigen::VectorXd& action);

/// Pathwise sample a = K x + sigma .* noise with its chain-rule pullback.
struct ReparamSample {
  Eigen::VectorXd action;
  Eigen::VectorXd state;
  Eigen::VectorXd noise;
  Eigen::VectorXd sigma;

  /// Gradient wrt theta of f(a(theta)) given df/da.
  Eigen::VectorXd pullback(const Eigen::VectorXd& df_da) const;
};

ReparamSample reparam_sample(const PolicyParams& policy, const Eigen::VectorXd& state,
                             const Eigen::VectorXd& noise);

inline constexpr double kDefaultFisherDamping = 1e-6;

/// Exact tabular Fisher E_d E_pi[grad log pi grad log pi^T]: block-diagonal,
/// block s = d(s) (diag(pi_s) - pi_s pi_s^T).
Eigen::MatrixXd fisher_matrix(const PolicyParams& policy,
                              const Eigen::VectorXd& state_weights);
/// Linear-Gaussian Fisher given E_d[x x^T]: mean block diag(1/sigma^2) (x) M,
/// log-std block 2 I.
Eigen::MatrixXd fisher_matrix_gaussian(const PolicyParams& policy,
                                       const Eigen::MatrixXd& state_second_moment);

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json to_json(const PolicyParams& policy);
PolicyParams policy_from_json(const nlohmann::json& j);
void save_policy(const PolicyParams& policy, const std::filesystem::path& path);
PolicyParams load_policy(const std::filesystem::path& path);

}  // namespace lokilab
