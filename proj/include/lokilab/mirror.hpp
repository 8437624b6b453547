#pragma once

#include <Eigen/Dense>
#include <string>

namespace lokilab {

enum class BregmanKind { kQuadratic, kNegEntropy, kFisherQuadratic };
enum class NormKind { kEuclidean, kWeightedEuclidean, kL1Simplex };

const char* to_string(BregmanKind kind);
BregmanKind bregman_kind_from_string(const std::string& name);

/// Regularizer R with its norm and strong-convexity modulus.
///
/// quadratic: R = 1/2 x^T W x (W empty means identity).
/// neg-entropy: R = sum x log x on the simplex, l1 norm.
/// fisher-quadratic: R = 1/2 x^T (F + damping I) x with F frozen at the iterate.
struct BregmanSpec {
  BregmanKind kind = BregmanKind::kQuadratic;
  NormKind norm = NormKind::kEuclidean;
  double alpha = 1.0;
  Eigen::MatrixXd weight;

  static BregmanSpec euclidean();
  static BregmanSpec quadratic(const Eigen::MatrixXd& W);
  static BregmanSpec neg_entropy();
  static BregmanSpec fisher(const Eigen::MatrixXd& fisher, double damping);
};

void validate(const BregmanSpec& spec);

double bregman_divergence(const BregmanSpec& spec, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& y);
double primal_norm(const BregmanSpec& spec, const Eigen::VectorXd& v);
double dual_norm(const BregmanSpec& spec, const Eigen::VectorXd& v);

/// Feasible set Theta for the prox map.
struct ConstraintSet {
  enum class Kind { kNone, kSimplex, kBox, kBall, kZeroSumBox };
  Kind kind = Kind::kNone;
  double bound = 0.0;       // box half-width or ball radius
  Eigen::VectorXd center;   // ball center (empty: origin)
  int block_size = 0;       // kZeroSumBox: each consecutive block sums to 0

  static ConstraintSet none() { return {}; }
  static ConstraintSet simplex() { return {Kind::kSimplex, 0.0, {}, 0}; }
  static ConstraintSet box(double half_width) { return {Kind::kBox, half_width, {}, 0}; }
  static ConstraintSet ball(double radius, Eigen::VectorXd c = {}) {
    return {Kind::kBall, radius, std::move(c), 0};
  }
  static ConstraintSet zero_sum_box(double half_width, int block) {
    return {Kind::kZeroSumBox, half_width, {}, block};
  }
};

/// Euclidean projection onto the set.
Eigen::VectorXd project(const ConstraintSet& set, const Eigen::VectorXd& x);
bool contains(const ConstraintSet& set, const Eigen::VectorXd& x, double tol = 1e-9);

struct ProxResult {
  Eigen::VectorXd theta_next;
  double eta_used = 0.0;
  double divergence_moved = 0.0;     // D_R(theta_next || theta)
  double surrogate_grad_norm = 0.0;  // ||(theta - theta_next) / eta||
  int solver_iterations = 0;
};

inline constexpr double kProxTolerance = 1e-10;
inline constexpr int kProxMaxIterations = 10000;

/// argmin_{x in Theta} <g, x> + D_R(x || theta) / eta.
ProxResult prox_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& g,
                     const BregmanSpec& spec, double eta,
                     const ConstraintSet& set = ConstraintSet::none());

enum class ScheduleKind { kConstant, kProp2, kThm1 };

const char* to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

struct StepSchedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  double eta = 0.1;
  double sigma_hat = 1.0;
  int d = 0;
};

/// constant: eta; prop2: 1/(sigma_hat n); thm1: n^d / (sigma_hat sum_{m<=n} m^d).
double step_size(const StepSchedule& schedule, int n);

/// g^T W^{-1} g at or below this counts as a zero gradient.
inline constexpr double kTrustRegionFloor = 1e-24;

/// Step that makes the quadratic KL model 1/2 eta^2 g^T W^{-1} g equal delta.
/// Returns 0 when g^T W^{-1} g <= kTrustRegionFloor.
double trust_region_eta(const Eigen::VectorXd& g, const Eigen::MatrixXd& damped_fisher,
                        double delta);

struct NonexpansivenessReport {
  double lhs = 0.0;  // ||H - G||
  double rhs = 0.0;  // ||g - h||_* / alpha
};

/// H and G are the eta-scaled displacements (theta - P(theta)) / eta under h and g.
NonexpansivenessReport prox_nonexpansiveness_check(const Eigen::VectorXd& theta,
                                                   const Eigen::VectorXd& g,
                                                   const Eigen::VectorXd& h,
                                                   const BregmanSpec& spec, double eta,
                                                   const ConstraintSet& set = ConstraintSet::none());

}  // namespace lokilab
