#include "doctest.h"
#include "helpers.hpp"
#include "lokilab/error.hpp"
#include "lokilab/mirror.hpp"
#include "lokilab/policy.hpp"
#include "lokilab/theory.hpp"

using namespace lokilab;

namespace {

Eigen::MatrixXd random_spd(int n, std::mt19937_64& gen) {
  const Eigen::MatrixXd M = Eigen::MatrixXd::NullaryExpr(n, n, [&]() { return std::normal_distribution<double>()(gen); });
  return M * M.transpose() / n + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

Eigen::VectorXd random_simplex(int n, std::mt19937_64& gen) {
  return testutil::random_probs(1, n, gen).row(0).transpose();
}

double prox_objective(const Eigen::VectorXd& x, const Eigen::VectorXd& theta, const Eigen::VectorXd& g,
                      const BregmanSpec& spec, double eta) {
  return g.dot(x) + bregman_divergence(spec, x, theta) / eta;
}

}  // namespace

TEST_CASE("Euclidean prox is a gradient step") {
  std::mt19937_64 gen(1);
  const Eigen::VectorXd theta = testutil::random_vector(6, gen);
  const Eigen::VectorXd g = testutil::random_vector(6, gen);
  const auto r = prox_step(theta, g, BregmanSpec::euclidean(), 0.3);
  CHECK((r.theta_next - (theta - 0.3 * g)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.eta_used == 0.3);
  CHECK(std::abs(r.surrogate_grad_norm - g.norm()) < 1e-12);
  CHECK(r.divergence_moved >= 0.0);
}

TEST_CASE("neg-entropy prox on the simplex is multiplicative weights") {
  Eigen::VectorXd theta(2);
  theta << 0.5, 0.5;
  Eigen::VectorXd g(2);
  g << 1.0, 0.0;
  const auto r = prox_step(theta, g, BregmanSpec::neg_entropy(), 1.0, ConstraintSet::simplex());
  Eigen::VectorXd expected(2);
  expected << std::exp(-1.0), 1.0;
  expected /= expected.sum();
  CHECK((r.theta_next - expected).cwiseAbs().maxCoeff() < 1e-10);

  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = random_simplex(5, gen);
    const Eigen::VectorXd h = testutil::random_vector(5, gen);
    const double eta = 0.1 + trial * 0.2;
    Eigen::VectorXd w = (x.array() * (-eta * h.array()).exp()).matrix();
    w /= w.sum();
    CHECK((prox_step(x, h, BregmanSpec::neg_entropy(), eta, ConstraintSet::simplex()).theta_next - w)
              .cwiseAbs()
              .maxCoeff() < 1e-10);
  }
  CHECK_THROWS_AS(prox_step(theta, g, BregmanSpec::neg_entropy(), 1.0), Error);
}

TEST_CASE("Fisher-quadratic prox equals a dense linear solve") {
  std::mt19937_64 gen(3);
  const PolicyParams p = testutil::random_tabular(3, 3, gen);
  const Eigen::VectorXd d = random_simplex(3, gen);
  const Eigen::MatrixXd F = fisher_matrix(p, d);
  const double damping = 1e-3;
  const Eigen::VectorXd g = testutil::random_vector(9, gen);
  const auto r = prox_step(p.theta, g, BregmanSpec::fisher(F, damping), 0.7);
  const Eigen::MatrixXd M = F + damping * Eigen::MatrixXd::Identity(9, 9);
  const Eigen::VectorXd expected = p.theta - 0.7 * M.fullPivLu().solve(g);
  CHECK((r.theta_next - expected).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(BregmanSpec::fisher(F, 0.0), Error);
}

TEST_CASE("zero gradient leaves theta unchanged") {
  std::mt19937_64 gen(4);
  const Eigen::VectorXd theta = testutil::random_vector(4, gen);
  CHECK(prox_step(theta, Eigen::VectorXd::Zero(4), BregmanSpec::quadratic(random_spd(4, gen)), 2.0).theta_next == theta);
  const Eigen::VectorXd x = random_simplex(4, gen);
  CHECK((prox_step(x, Eigen::VectorXd::Zero(4), BregmanSpec::neg_entropy(), 2.0, ConstraintSet::simplex()).theta_next - x)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("prox_step preconditions") {
  const Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(prox_step(theta, Eigen::VectorXd::Ones(3), BregmanSpec::euclidean(), 0.0), Error);
  CHECK_THROWS_AS(prox_step(theta, Eigen::VectorXd::Constant(3, NAN), BregmanSpec::euclidean(), 1.0), Error);
  Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(3, 3);
  indefinite(2, 2) = -1.0;
  CHECK_THROWS_AS(BregmanSpec::quadratic(indefinite), Error);
}

TEST_CASE("constrained quadratic prox satisfies first-order optimality") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd W = random_spd(5, gen);
    const BregmanSpec spec = BregmanSpec::quadratic(W);
    const Eigen::VectorXd theta = testutil::random_vector(5, gen, 0.5);
    const Eigen::VectorXd g = testutil::random_vector(5, gen, 3.0);
    const double eta = 0.5;
    const ConstraintSet box = ConstraintSet::box(1.0);
    const Eigen::VectorXd x = project(box, theta);
    const auto r = prox_step(x, g, spec, eta, box);
    CHECK(contains(box, r.theta_next));
    const Eigen::VectorXd grad = g + W * (r.theta_next - x) / eta;
    const Eigen::VectorXd fixed = project(box, r.theta_next - 0.1 * grad);
    CHECK((fixed - r.theta_next).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("zero-sum box prox beats feasible competitors") {
  std::mt19937_64 gen(6);
  const ConstraintSet set = ConstraintSet::zero_sum_box(1.0, 3);
  const Eigen::VectorXd theta = project(set, testutil::random_vector(6, gen));
  const Eigen::VectorXd g = testutil::random_vector(6, gen, 5.0);
  const BregmanSpec spec = BregmanSpec::euclidean();
  const auto r = prox_step(theta, g, spec, 1.0, set);
  CHECK(contains(set, r.theta_next));
  const double best = prox_objective(r.theta_next, theta, g, spec, 1.0);
  for (int k = 0; k < 500; ++k) {
    const Eigen::VectorXd y = project(set, testutil::random_vector(6, gen));
    CHECK(prox_objective(y, theta, g, spec, 1.0) >= best - 1e-9);
  }
}

TEST_CASE("projections") {
  Eigen::VectorXd v(3);
  v << 2.0, -0.5, 0.1;
  CHECK((project(ConstraintSet::box(1.0), v) - Eigen::Vector3d(1.0, -0.5, 0.1)).norm() < 1e-15);
  CHECK(std::abs(project(ConstraintSet::ball(1.0), v).norm() - 1.0) < 1e-12);
  const Eigen::VectorXd s = project(ConstraintSet::simplex(), v);
  CHECK(std::abs(s.sum() - 1.0) < 1e-12);
  CHECK(s.minCoeff() >= 0.0);
  CHECK((s - Eigen::Vector3d(1.0, 0.0, 0.0)).norm() < 1e-12);
}

TEST_CASE("step schedules") {
  StepSchedule prop2{ScheduleKind::kProp2, 0.0, 2.0, 0};
  StepSchedule thm1{ScheduleKind::kThm1, 0.0, 2.0, 0};
  for (int n = 1; n <= 10000; ++n) CHECK(std::abs(step_size(thm1, n) - step_size(prop2, n)) <= 1e-15 * step_size(prop2, n));
  thm1.d = 1;
  thm1.sigma_hat = 1.0;
  CHECK(std::abs(step_size(thm1, 3) - 0.5) < 1e-15);
  for (int n = 1; n < 100; ++n) {
    CHECK(step_size(prop2, n) > 0.0);
    CHECK(step_size(prop2, n + 1) < step_size(prop2, n));
  }
  CHECK(step_size(StepSchedule{ScheduleKind::kConstant, 0.25, 1.0, 0}, 7) == 0.25);
  CHECK_THROWS_AS(step_size(prop2, 0), Error);
  CHECK(schedule_kind_from_string("thm1") == ScheduleKind::kThm1);
  CHECK_THROWS_AS(schedule_kind_from_string("cosine"), Error);
}

TEST_CASE("trust-region step matches the KL model") {
  std::mt19937_64 gen(7);
  const Eigen::MatrixXd M = random_spd(4, gen);
  const Eigen::VectorXd g = testutil::random_vector(4, gen);
  const double eta = trust_region_eta(g, M, 0.01);
  const Eigen::VectorXd step = eta * M.llt().solve(g);
  CHECK(std::abs(0.5 * step.dot(M * step) - 0.01) < 1e-14);
  CHECK(trust_region_eta(Eigen::VectorXd::Constant(4, 1e-13), M, 0.01) == 0.0);
  CHECK_THROWS_AS(trust_region_eta(g, M, 0.0), Error);
}

TEST_CASE("Bregman divergences are strongly convex in their norms") {
  std::mt19937_64 gen(8);
  const Eigen::MatrixXd W = random_spd(5, gen);
  const PolicyParams p = testutil::random_tabular(2, 3, gen);
  const BregmanSpec specs[] = {BregmanSpec::euclidean(), BregmanSpec::quadratic(W),
                               BregmanSpec::fisher(fisher_matrix(p, Eigen::Vector2d(0.4, 0.6)), 1e-2)};
  for (const auto& spec : specs) {
    const int n = spec.weight.size() ? static_cast<int>(spec.weight.rows()) : 5;
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd x = testutil::random_vector(n, gen), y = testutil::random_vector(n, gen);
      const double norm = primal_norm(spec, x - y);
      CHECK(bregman_divergence(spec, x, y) >= 0.5 * spec.alpha * norm * norm - 1e-12);
    }
  }
  const BregmanSpec ent = BregmanSpec::neg_entropy();
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = random_simplex(6, gen), y = random_simplex(6, gen);
    const double l1 = (x - y).lpNorm<1>();
    CHECK(primal_norm(ent, x - y) == doctest::Approx(l1));
    CHECK(bregman_divergence(ent, x, y) >= 0.5 * ent.alpha * l1 * l1 - 1e-12);
  }
}

TEST_CASE("prox nonexpansiveness") {
  std::mt19937_64 gen(9);
  const Eigen::VectorXd theta = testutil::random_vector(4, gen);
  const Eigen::VectorXd g = testutil::random_vector(4, gen);
  const auto same = prox_nonexpansiveness_check(theta, g, g, BregmanSpec::euclidean(), 0.5);
  CHECK(same.lhs == 0.0);

  const Eigen::VectorXd h = testutil::random_vector(4, gen);
  const auto lin = prox_nonexpansiveness_check(theta, g, h, BregmanSpec::euclidean(), 0.5);
  CHECK(std::abs(lin.lhs - (g - h).norm()) < 1e-12);
  CHECK(std::abs(lin.lhs - lin.rhs) < 1e-12);

  for (int k = 0; k < 200; ++k) {
    const Eigen::VectorXd x = random_simplex(5, gen);
    const double eta = std::exp(std::uniform_real_distribution<double>(std::log(0.01), std::log(10.0))(gen));
    const auto r = prox_nonexpansiveness_check(x, testutil::random_vector(5, gen), testutil::random_vector(5, gen),
                                               BregmanSpec::neg_entropy(), eta, ConstraintSet::simplex());
    CHECK(r.lhs <= r.rhs + 1e-10);
  }
}

TEST_CASE("per-geometry nonexpansiveness certification") {
  for (auto kind : {BregmanKind::kQuadratic, BregmanKind::kNegEntropy, BregmanKind::kFisherQuadratic}) {
    const BoundReport r = check_nonexpansive(kind, 200, 3);
    CHECK(r.pass);
  }
}

TEST_CASE("geometry names") {
  for (auto kind : {BregmanKind::kQuadratic, BregmanKind::kNegEntropy, BregmanKind::kFisherQuadratic})
    CHECK(bregman_kind_from_string(to_string(kind)) == kind);
  CHECK_THROWS_AS(bregman_kind_from_string("hellinger"), Error);
}
