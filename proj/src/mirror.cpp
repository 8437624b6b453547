#include "lokilab/mirror.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "lokilab/error.hpp"

namespace lokilab {
namespace {

bool identity_weight(const BregmanSpec& spec) { return spec.weight.size() == 0; }

Eigen::VectorXd weight_times(const BregmanSpec& spec, const Eigen::VectorXd& v) {
  return identity_weight(spec) ? v : Eigen::VectorXd(spec.weight * v);
}

Eigen::VectorXd weight_solve(const BregmanSpec& spec, const Eigen::VectorXd& v) {
  if (identity_weight(spec)) return v;
  Eigen::LLT<Eigen::MatrixXd> llt(spec.weight);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::kPrecondition, "Bregman weight is not positive definite");
  return llt.solve(v);
}

double log_sum_exp(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

Eigen::VectorXd project_zero_sum_block(const Eigen::VectorXd& v, double b) {
  auto clipped_sum = [&](double tau) { return (v.array() - tau).max(-b).min(b).sum(); };
  double lo = v.minCoeff() - b;
  double hi = v.maxCoeff() + b;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (clipped_sum(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double tau = 0.5 * (lo + hi);
  return (v.array() - tau).max(-b).min(b).matrix();
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  // Sort-based Euclidean projection.
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double acc = 0.0;
  double tau = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    acc += u[i];
    const double t = (acc - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) tau = t;
  }
  return (v.array() - tau).max(0.0).matrix();
}

ProxResult finish(const BregmanSpec& spec, const Eigen::VectorXd& theta, Eigen::VectorXd next,
                  double eta, int iterations) {
  if (!next.allFinite())
    throw Error(ErrorCode::kInternal, fmt::format("prox step: non-finite iterate at eta = {}", eta));
  ProxResult r;
  r.divergence_moved = std::max(0.0, bregman_divergence(spec, next, theta));
  r.surrogate_grad_norm = primal_norm(spec, (theta - next) / eta);
  r.theta_next = std::move(next);
  r.eta_used = eta;
  r.solver_iterations = iterations;
  return r;
}

ProxResult neg_entropy_prox(const Eigen::VectorXd& theta, const Eigen::VectorXd& g, double eta,
                            const BregmanSpec& spec) {
  Eigen::VectorXd z(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    z(i) = theta(i) > 0.0 ? std::log(theta(i)) - eta * g(i) : -INFINITY;
  const Eigen::VectorXd p = (z.array() - log_sum_exp(z)).exp().matrix();
  return finish(spec, theta, p, eta, 0);
}

// Accelerated projected gradient on <g, x> + 1/(2 eta) (x - theta)^T W (x - theta).
ProxResult constrained_quadratic_prox(const Eigen::VectorXd& theta, const Eigen::VectorXd& g,
                                      const BregmanSpec& spec, double eta,
                                      const ConstraintSet& set) {
  if (identity_weight(spec)) return finish(spec, theta, project(set, theta - eta * g), eta, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spec.weight, Eigen::EigenvaluesOnly);
  const double lipschitz = es.eigenvalues().maxCoeff() / eta;
  auto grad = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return g + spec.weight * (x - theta) / eta;
  };
  Eigen::VectorXd x = project(set, theta);
  Eigen::VectorXd y = x;
  double t = 1.0;
  double change = INFINITY;
  for (int it = 1; it <= kProxMaxIterations; ++it) {
    Eigen::VectorXd next = project(set, y - grad(y) / lipschitz);
    change = (next - x).cwiseAbs().maxCoeff();
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / t_next) * (next - x);
    // Restart momentum when it stops helping.
    if ((y - next).dot(next - x) > 0.0) {
      y = next;
      t = 1.0;
    } else {
      t = t_next;
    }
    x = std::move(next);
    if (change <= kProxTolerance * std::max(1.0, x.cwiseAbs().maxCoeff()))
      return finish(spec, theta, x, eta, it);
  }
  throw Error(ErrorCode::kNotConverged,
              fmt::format("constrained prox did not converge in {} iterations, residual {:.3e}",
                          kProxMaxIterations, change));
}

}  // namespace

const char* to_string(BregmanKind kind) {
  switch (kind) {
    case BregmanKind::kQuadratic: return "quadratic";
    case BregmanKind::kNegEntropy: return "neg-entropy";
    case BregmanKind::kFisherQuadratic: return "fisher-quadratic";
  }
  return "unknown";
}

BregmanKind bregman_kind_from_string(const std::string& name) {
  if (name == "quadratic") return BregmanKind::kQuadratic;
  if (name == "neg-entropy") return BregmanKind::kNegEntropy;
  if (name == "fisher-quadratic") return BregmanKind::kFisherQuadratic;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown Bregman kind '{}'", name));
}

BregmanSpec BregmanSpec::euclidean() { return {}; }

BregmanSpec BregmanSpec::quadratic(const Eigen::MatrixXd& W) {
  BregmanSpec s;
  s.norm = NormKind::kWeightedEuclidean;
  s.weight = W;
  validate(s);
  return s;
}

BregmanSpec BregmanSpec::neg_entropy() {
  BregmanSpec s;
  s.kind = BregmanKind::kNegEntropy;
  s.norm = NormKind::kL1Simplex;
  return s;
}

BregmanSpec BregmanSpec::fisher(const Eigen::MatrixXd& fisher, double damping) {
  if (!(damping > 0.0)) throw Error(ErrorCode::kInvalidArgument, "Fisher damping must be positive");
  BregmanSpec s;
  s.kind = BregmanKind::kFisherQuadratic;
  s.norm = NormKind::kWeightedEuclidean;
  s.weight = fisher;
  s.weight.diagonal().array() += damping;
  validate(s);
  return s;
}

void validate(const BregmanSpec& spec) {
  if (!(spec.alpha > 0.0)) throw Error(ErrorCode::kInvalidArgument, "Bregman alpha must be positive");
  if (identity_weight(spec)) return;
  const Eigen::MatrixXd& W = spec.weight;
  if (W.rows() != W.cols()) throw Error(ErrorCode::kDimensionMismatch, "Bregman weight must be square");
  if ((W - W.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + W.cwiseAbs().maxCoeff()))
    throw Error(ErrorCode::kInvalidArgument, "Bregman weight must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(W);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::kPrecondition, "Bregman weight is not positive definite");
}

double bregman_divergence(const BregmanSpec& spec, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kDimensionMismatch, "bregman_divergence: sizes differ");
  if (spec.kind == BregmanKind::kNegEntropy) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x(i) < 0.0 || y(i) < 0.0)
        throw Error(ErrorCode::kInvalidArgument, "neg-entropy divergence needs nonnegative points");
      if (x(i) > 0.0) {
        if (y(i) == 0.0) return INFINITY;
        total += x(i) * std::log(x(i) / y(i));
      }
      total += y(i) - x(i);
    }
    return total;
  }
  const Eigen::VectorXd diff = x - y;
  return 0.5 * diff.dot(weight_times(spec, diff));
}

double primal_norm(const BregmanSpec& spec, const Eigen::VectorXd& v) {
  if (spec.norm == NormKind::kL1Simplex) return v.lpNorm<1>();
  return std::sqrt(std::max(0.0, v.dot(weight_times(spec, v))));
}

double dual_norm(const BregmanSpec& spec, const Eigen::VectorXd& v) {
  if (spec.norm == NormKind::kL1Simplex) return v.lpNorm<Eigen::Infinity>();
  return std::sqrt(std::max(0.0, v.dot(weight_solve(spec, v))));
}

Eigen::VectorXd project(const ConstraintSet& set, const Eigen::VectorXd& x) {
  switch (set.kind) {
    case ConstraintSet::Kind::kNone: return x;
    case ConstraintSet::Kind::kSimplex: return project_simplex(x);
    case ConstraintSet::Kind::kBox: return x.cwiseMax(-set.bound).cwiseMin(set.bound);
    case ConstraintSet::Kind::kBall: {
      const Eigen::VectorXd c = set.center.size() ? set.center : Eigen::VectorXd::Zero(x.size());
      const double r = (x - c).norm();
      return r <= set.bound ? x : Eigen::VectorXd(c + (x - c) * (set.bound / r));
    }
    case ConstraintSet::Kind::kZeroSumBox: {
      if (set.block_size <= 0 || x.size() % set.block_size != 0)
        throw Error(ErrorCode::kDimensionMismatch, "zero-sum box: block size does not divide the dimension");
      Eigen::VectorXd out(x.size());
      for (Eigen::Index start = 0; start < x.size(); start += set.block_size)
        out.segment(start, set.block_size) =
            project_zero_sum_block(x.segment(start, set.block_size), set.bound);
      return out;
    }
  }
  return x;
}

bool contains(const ConstraintSet& set, const Eigen::VectorXd& x, double tol) {
  switch (set.kind) {
    case ConstraintSet::Kind::kNone: return true;
    case ConstraintSet::Kind::kSimplex:
      return x.minCoeff() >= -tol && std::abs(x.sum() - 1.0) <= tol;
    case ConstraintSet::Kind::kBox: return x.cwiseAbs().maxCoeff() <= set.bound + tol;
    case ConstraintSet::Kind::kBall: {
      const Eigen::VectorXd c = set.center.size() ? set.center : Eigen::VectorXd::Zero(x.size());
      return (x - c).norm() <= set.bound + tol;
    }
    case ConstraintSet::Kind::kZeroSumBox: {
      if (x.cwiseAbs().maxCoeff() > set.bound + tol) return false;
      for (Eigen::Index start = 0; start < x.size(); start += set.block_size)
        if (std::abs(x.segment(start, set.block_size).sum()) > tol) return false;
      return true;
    }
  }
  return false;
}

ProxResult prox_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& g,
                     const BregmanSpec& spec, double eta, const ConstraintSet& set) {
  if (!(eta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "prox_step: eta must be positive");
  if (theta.size() != g.size()) throw Error(ErrorCode::kDimensionMismatch, "prox_step: theta and g differ in size");
  if (!g.allFinite()) throw Error(ErrorCode::kInvalidArgument, "prox_step: g is not finite");
  if (!identity_weight(spec) && spec.weight.rows() != theta.size())
    throw Error(ErrorCode::kDimensionMismatch, "prox_step: Bregman weight has the wrong size");

  if (spec.kind == BregmanKind::kNegEntropy) {
    if (set.kind != ConstraintSet::Kind::kSimplex)
      throw Error(ErrorCode::kInvalidArgument, "neg-entropy prox needs the simplex constraint");
    return neg_entropy_prox(theta, g, eta, spec);
  }
  if (set.kind == ConstraintSet::Kind::kNone)
    return finish(spec, theta, theta - eta * weight_solve(spec, g), eta, 0);
  return constrained_quadratic_prox(theta, g, spec, eta, set);
}

const char* to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kProp2: return "prop2";
    case ScheduleKind::kThm1: return "thm1";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "prop2") return ScheduleKind::kProp2;
  if (name == "thm1") return ScheduleKind::kThm1;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown schedule kind '{}'", name));
}

double step_size(const StepSchedule& schedule, int n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "step_size: n must be >= 1");
  switch (schedule.kind) {
    case ScheduleKind::kConstant: return schedule.eta;
    case ScheduleKind::kProp2: return 1.0 / (schedule.sigma_hat * n);
    case ScheduleKind::kThm1: {
      if (schedule.d < 0) throw Error(ErrorCode::kInvalidArgument, "step_size: d must be >= 0");
      double sum = 0.0;
      for (int m = 1; m <= n; ++m) sum += std::pow(static_cast<double>(m), schedule.d);
      return std::pow(static_cast<double>(n), schedule.d) / (schedule.sigma_hat * sum);
    }
  }
  return 0.0;
}

double trust_region_eta(const Eigen::VectorXd& g, const Eigen::MatrixXd& damped_fisher,
                        double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "trust region: KL budget must be positive");
  Eigen::LLT<Eigen::MatrixXd> llt(damped_fisher);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::kPrecondition, "Fisher is not positive definite after damping");
  const double quad = g.dot(llt.solve(g));
  if (!(quad > kTrustRegionFloor)) return 0.0;
  return std::sqrt(2.0 * delta / quad);
}

NonexpansivenessReport prox_nonexpansiveness_check(const Eigen::VectorXd& theta,
                                                   const Eigen::VectorXd& g,
                                                   const Eigen::VectorXd& h,
                                                   const BregmanSpec& spec, double eta,
                                                   const ConstraintSet& set) {
  const Eigen::VectorXd G = (theta - prox_step(theta, g, spec, eta, set).theta_next) / eta;
  const Eigen::VectorXd H = (theta - prox_step(theta, h, spec, eta, set).theta_next) / eta;
  NonexpansivenessReport r;
  r.lhs = primal_norm(spec, H - G);
  r.rhs = dual_norm(spec, g - h) / spec.alpha;
  return r;
}

}  // namespace lokilab
