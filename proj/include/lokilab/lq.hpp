#pragma once

#include <Eigen/Dense>

#include "lokilab/policy.hpp"

namespace lokilab {

/// Discounted linear-quadratic task: x' = A x + B u, cost x^T Q x + u^T R u,
/// x0 ~ N(0, init_cov).
struct LqTask {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd init_cov;
  double gamma = 0.9;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int action_dim() const { return static_cast<int>(B.cols()); }
};

/// Shapes, R symmetric positive definite, Q symmetric PSD, init_cov PD.
void validate(const LqTask& task);

/// Exact evaluation of the linear policy u = K x + sigma .* eps.
struct LqEvaluation {
  Eigen::MatrixXd value_matrix;   // P: V(x) = x^T P x + value_offset
  double value_offset = 0.0;
  /// sum_t gamma^t E[x_t x_t^T]; the discounted state distribution has second
  /// moment (1 - gamma) times this.
  Eigen::MatrixXd state_moment;
  double total_cost = 0.0;
};

/// Solves the discounted Lyapunov equations. Throws Error(kDivergedRollout)
/// when sqrt(gamma) (A + B K) is not Schur stable.
LqEvaluation lq_evaluate(const LqTask& task, const Eigen::MatrixXd& gain,
                         const Eigen::VectorXd& action_std);
LqEvaluation lq_evaluate(const LqTask& task, const PolicyParams& policy);

/// grad_u Q_K(x, u) = 2 R u + 2 gamma B^T P (A x + B u).
Eigen::VectorXd lq_action_gradient(const LqTask& task, const LqEvaluation& eval,
                                   const Eigen::VectorXd& state, const Eigen::VectorXd& action);

/// Optimal gain of the discounted LQR by Riccati iteration.
Eigen::MatrixXd lq_optimal_gain(const LqTask& task, double tol = 1e-13, int max_iter = 100000);

/// Solves X = M + gamma L^T X L for symmetric X.
Eigen::MatrixXd discounted_lyapunov(const Eigen::MatrixXd& L, const Eigen::MatrixXd& M,
                                    double gamma);

}  // namespace lokilab
