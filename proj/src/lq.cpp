#include "lokilab/lq.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "lokilab/error.hpp"

namespace lokilab {
namespace {

bool symmetric(const Eigen::MatrixXd& M) {
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + M.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  return es.eigenvalues().minCoeff();
}

double spectral_radius(const Eigen::MatrixXd& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

void validate(const LqTask& task) {
  const auto n = task.A.rows();
  const auto m = task.B.cols();
  if (n <= 0 || m <= 0 || task.A.cols() != n || task.B.rows() != n || task.Q.rows() != n ||
      task.Q.cols() != n || task.R.rows() != m || task.R.cols() != m ||
      task.init_cov.rows() != n || task.init_cov.cols() != n)
    throw Error(ErrorCode::kDimensionMismatch, "LQ task matrices have inconsistent shapes");
  if (!(task.gamma >= 0.0 && task.gamma < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "LQ gamma must lie in [0, 1)");
  if (!symmetric(task.R) || min_eigenvalue(task.R) <= 0.0)
    throw Error(ErrorCode::kInvalidArgument, "R must be symmetric positive definite");
  if (!symmetric(task.Q) || min_eigenvalue(task.Q) < -1e-12)
    throw Error(ErrorCode::kInvalidArgument, "Q must be symmetric positive semidefinite");
  if (!symmetric(task.init_cov) || min_eigenvalue(task.init_cov) <= 0.0)
    throw Error(ErrorCode::kInvalidArgument, "init_cov must be symmetric positive definite");
}

Eigen::MatrixXd discounted_lyapunov(const Eigen::MatrixXd& L, const Eigen::MatrixXd& M,
                                    double gamma) {
  const auto n = L.rows();
  // vec(L^T X L) = (L^T kron L^T) vec(X) in column-major vec.
  const Eigen::MatrixXd Lt = L.transpose();
  Eigen::MatrixXd kron(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = Lt(i, j) * Lt;
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n * n, n * n) - gamma * kron;
  const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(M.data(), n * n);
  const Eigen::VectorXd x = system.partialPivLu().solve(rhs);
  Eigen::MatrixXd X = Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n);
  return 0.5 * (X + X.transpose());
}

LqEvaluation lq_evaluate(const LqTask& task, const Eigen::MatrixXd& gain,
                         const Eigen::VectorXd& action_std) {
  if (gain.rows() != task.action_dim() || gain.cols() != task.state_dim())
    throw Error(ErrorCode::kDimensionMismatch, "gain shape does not match the LQ task");
  const Eigen::MatrixXd L = task.A + task.B * gain;
  const double rho = std::sqrt(task.gamma) * spectral_radius(L);
  if (!(rho < 1.0))
    throw Error(ErrorCode::kDivergedRollout,
                fmt::format("closed loop diverges: sqrt(gamma) * rho(A + BK) = {:.6g}", rho));
  const Eigen::MatrixXd action_cov = action_std.array().square().matrix().asDiagonal();

  LqEvaluation out;
  out.value_matrix = discounted_lyapunov(L, task.Q + gain.transpose() * task.R * gain, task.gamma);
  out.value_offset = ((task.R * action_cov).trace() +
                      task.gamma * (task.B.transpose() * out.value_matrix * task.B * action_cov).trace()) /
                     (1.0 - task.gamma);
  const Eigen::MatrixXd noise = task.B * action_cov * task.B.transpose();
  out.state_moment = discounted_lyapunov(L.transpose(),
                                         task.init_cov + task.gamma / (1.0 - task.gamma) * noise,
                                         task.gamma);
  out.total_cost = (out.value_matrix * task.init_cov).trace() + out.value_offset;
  return out;
}

LqEvaluation lq_evaluate(const LqTask& task, const PolicyParams& policy) {
  if (policy.is_tabular())
    throw Error(ErrorCode::kUnsupportedFamily, "LQ evaluation needs a linear policy");
  return lq_evaluate(task, policy.gain(), policy.action_std());
}

Eigen::VectorXd lq_action_gradient(const LqTask& task, const LqEvaluation& eval,
                                   const Eigen::VectorXd& state, const Eigen::VectorXd& action) {
  return 2.0 * task.R * action +
         2.0 * task.gamma * task.B.transpose() * eval.value_matrix * (task.A * state + task.B * action);
}

Eigen::MatrixXd lq_optimal_gain(const LqTask& task, double tol, int max_iter) {
  validate(task);
  const double g = task.gamma;
  Eigen::MatrixXd P = task.Q;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd S = task.R + g * task.B.transpose() * P * task.B;
    const Eigen::MatrixXd BtPA = task.B.transpose() * P * task.A;
    const Eigen::MatrixXd next =
        task.Q + g * task.A.transpose() * P * task.A - g * g * BtPA.transpose() * S.ldlt().solve(BtPA);
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = 0.5 * (next + next.transpose());
    if (change <= tol * (1.0 + P.cwiseAbs().maxCoeff())) {
      const Eigen::MatrixXd S2 = task.R + g * task.B.transpose() * P * task.B;
      return -g * S2.ldlt().solve(task.B.transpose() * P * task.A);
    }
  }
  throw Error(ErrorCode::kNotConverged, "Riccati iteration did not converge");
}

}  // namespace lokilab
