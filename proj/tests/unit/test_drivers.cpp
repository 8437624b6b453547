#include <boost/math/distributions/chi_squared.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "doctest.h"
#include "helpers.hpp"
#include "lokilab/drivers.hpp"
#include "lokilab/error.hpp"
#include "lokilab/exact.hpp"

using namespace lokilab;

namespace {

void check_same_trajectory(const RunRecord& a, const RunRecord& b) {
  REQUIRE(a.iterations.size() == b.iterations.size());
  for (std::size_t i = 0; i < a.iterations.size(); ++i) {
    const auto& x = a.iterations[i];
    const auto& y = b.iterations[i];
    CHECK(x.J_exact == y.J_exact);
    CHECK(x.J_mc == y.J_mc);
    CHECK(x.grad_norm == y.grad_norm);
    CHECK(x.kl_moved == y.kl_moved);
    CHECK(x.eta == y.eta);
    CHECK(x.phase == y.phase);
  }
  CHECK(a.final_J == b.final_J);
  CHECK(a.final_policy.theta == b.final_policy.theta);
}

double chi_square_p(const std::vector<long>& counts, const std::vector<double>& pmf, long n) {
  double stat = 0.0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    const double e = pmf[i] * static_cast<double>(n);
    stat += (static_cast<double>(counts[i]) - e) * (static_cast<double>(counts[i]) - e) / e;
  }
  boost::math::chi_squared dist(static_cast<double>(pmf.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.iterations = 30;
  cfg.batch_size = 10;
  cfg.switch_dist = {5, 10, 3};
  return cfg;
}

}  // namespace

TEST_CASE("switch law") {
  SUBCASE("pmf matches exact rational weights") {
    using boost::multiprecision::cpp_rational;
    for (const SwitchDistribution dist : {SwitchDistribution{10, 20, 3}, SwitchDistribution{1, 2, 0},
                                          SwitchDistribution{7, 100, 1}, SwitchDistribution{3, 9, 5}}) {
      cpp_rational total = 0;
      std::vector<cpp_rational> w;
      for (int n = dist.n_min; n <= dist.n_max; ++n) {
        cpp_rational x = 1;
        for (int k = 0; k < dist.d; ++k) x *= n;
        w.push_back(x);
        total += x;
      }
      const auto pmf = switch_pmf(dist);
      REQUIRE(pmf.size() == w.size());
      double sum = 0.0;
      for (std::size_t i = 0; i < pmf.size(); ++i) {
        CHECK(std::abs(pmf[i] - static_cast<double>(w[i] / total)) < 1e-15);
        sum += pmf[i];
      }
      CHECK(std::abs(sum - 1.0) < 1e-14);
    }
  }
  SUBCASE("d = 0 is uniform") {
    for (double p : switch_pmf({4, 8, 0})) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("invalid ranges are rejected") {
    CHECK_THROWS_AS(switch_pmf({10, 19, 3}), Error);
    CHECK_THROWS_AS(switch_pmf({0, 10, 3}), Error);
    CHECK_THROWS_AS(switch_pmf({5, 10, -1}), Error);
    RunConfig cfg;
    cfg.switch_dist = {10, 15, 3};
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg.forced_switch = 5;
    CHECK_NOTHROW(validate(cfg));
  }
  SUBCASE("empirical law over seeds") {
    for (int d : {0, 3}) {
      RunConfig cfg;
      cfg.switch_dist = {10, 20, d};
      const auto pmf = switch_pmf(cfg.switch_dist);
      std::vector<long> counts(pmf.size(), 0);
      const long n = 10000;
      for (long seed = 1; seed <= n; ++seed) {
        const int K = draw_switch(cfg, static_cast<std::uint64_t>(seed));
        REQUIRE(K >= 10);
        REQUIRE(K <= 20);
        ++counts[static_cast<std::size_t>(K - 10)];
      }
      CHECK(chi_square_p(counts, pmf, n) > 0.001);
    }
  }
  SUBCASE("draws are a function of the seed") {
    RunConfig cfg;
    for (std::uint64_t seed = 1; seed < 50; ++seed) CHECK(draw_switch(cfg, seed) == draw_switch(cfg, seed));
    cfg.forced_switch = 17;
    CHECK(draw_switch(cfg, 3) == 17);
  }
}

TEST_CASE("switch-law constant") {
  CHECK(c_nm_constant(0, 3) == doctest::Approx(2.0986).epsilon(1e-4));
  CHECK(c_nm_constant(3, 25) == doctest::Approx(9.0199).epsilon(1e-4));
  CHECK(std::abs(c_nm_constant(1, 100000000) - 8.0 / 3.0) < 1e-7);
  for (int d = 0; d <= 6; ++d)
    for (int n : {1, 2, 10, 25, 1000}) {
      const long double ref = d == 0 ? std::log(static_cast<long double>(n)) + 1.0L
                                     : 8.0L * d / 3.0L * std::exp(static_cast<long double>(d) / n);
      CHECK(std::abs(c_nm_constant(d, n) - static_cast<double>(ref)) <= 1e-12 * static_cast<double>(ref));
    }
  CHECK_THROWS_AS(c_nm_constant(-1, 10), Error);
}

TEST_CASE("algorithm names round-trip") {
  for (Algorithm a : {Algorithm::kLoki, Algorithm::kPg, Algorithm::kDaggered, Algorithm::kAggrevated,
                      Algorithm::kSlols, Algorithm::kThor, Algorithm::kIdeal})
    CHECK(algorithm_from_string(to_string(a)) == a);
  CHECK_THROWS_AS(algorithm_from_string("ppo"), Error);
}

TEST_CASE("run configuration validation") {
  RunConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.bregman = BregmanKind::kNegEntropy;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = RunConfig{};
  cfg.iterations = 0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = RunConfig{};
  cfg.kl_reinforce = 0.0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = RunConfig{};
  cfg.forced_switch = cfg.iterations + 1;
  CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("drivers") {
  const TabularMdp m = make_chain2();
  ExpertPolicy expert = make_tempered_expert(m, 1.5);
  fit_expert_value(expert, m, 10000, 7);
  const double j_expert = exact_eval(m, expert.probs).total_cost;

  SUBCASE("expert-based algorithms need an expert") {
    const RunConfig cfg = small_config();
    try {
      run_algorithm(Algorithm::kLoki, m, nullptr, cfg, 1);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingExpertData);
    }
    CHECK_NOTHROW(run_algorithm(Algorithm::kPg, m, nullptr, cfg, 1));
    CHECK_THROWS_AS(run_baseline(Algorithm::kLoki, m, &expert, cfg, 1), Error);
  }
  SUBCASE("runs are a pure function of the seed") {
    const RunConfig cfg = small_config();
    for (Algorithm a : {Algorithm::kLoki, Algorithm::kPg, Algorithm::kSlols, Algorithm::kThor}) {
      check_same_trajectory(run_algorithm(a, m, &expert, cfg, 11), run_algorithm(a, m, &expert, cfg, 11));
      CHECK(run_algorithm(a, m, &expert, cfg, 11).final_policy.theta !=
            run_algorithm(a, m, &expert, cfg, 12).final_policy.theta);
    }
  }
  SUBCASE("forced switch at N is pure DAggerEd, at 0 is pure PG") {
    RunConfig cfg = small_config();
    cfg.forced_switch = cfg.iterations;
    for (std::uint64_t seed : {1u, 2u, 3u})
      check_same_trajectory(run_loki(m, expert, cfg, seed), run_baseline(Algorithm::kDaggered, m, &expert, cfg, seed));
    cfg.forced_switch = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const RunRecord loki = run_loki(m, expert, cfg, seed);
      check_same_trajectory(loki, run_baseline(Algorithm::kPg, m, nullptr, cfg, seed));
      CHECK(loki.expert_queries == 0);
    }
  }
  SUBCASE("phase switches once, right after K") {
    const RunConfig cfg = small_config();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const RunRecord rec = run_loki(m, expert, cfg, seed);
      CHECK(rec.K == draw_switch(cfg, seed));
      int changes = 0;
      for (std::size_t i = 0; i < rec.iterations.size(); ++i) {
        const auto& it = rec.iterations[i];
        CHECK(it.iter == static_cast<int>(i) + 1);
        CHECK(it.phase == (it.iter <= rec.K ? Phase::kImitation : Phase::kReinforcement));
        CHECK((it.expert_queries > 0) == (it.phase == Phase::kImitation));
        if (i > 0 && it.phase != rec.iterations[i - 1].phase) ++changes;
      }
      CHECK(changes == 1);
    }
  }
  SUBCASE("trust-region steps respect the KL budget") {
    const RunConfig cfg = small_config();
    for (Algorithm a : {Algorithm::kLoki, Algorithm::kPg, Algorithm::kAggrevated}) {
      const RunRecord rec = run_algorithm(a, m, &expert, cfg, 5);
      for (const auto& it : rec.iterations) {
        const double budget = it.phase == Phase::kImitation ? cfg.kl_imitation : cfg.kl_reinforce;
        CHECK(it.kl_moved <= budget * (1.0 + 1e-9));
        CHECK(it.eta >= 0.0);
      }
    }
  }
  SUBCASE("ideal run starts at the expert") {
    const RunRecord rec = run_algorithm(Algorithm::kIdeal, m, &expert, small_config(), 4);
    CHECK(std::abs(rec.iterations.front().J_exact - j_expert) < 1e-10);
  }
  SUBCASE("pure imitation with a decaying schedule converges to the expert") {
    RunConfig cfg = small_config();
    cfg.iterations = 60;
    cfg.step_mode = StepMode::kSchedule;
    cfg.imitation_schedule.sigma_hat = 2.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
      CHECK(std::abs(run_algorithm(Algorithm::kDaggered, m, &expert, cfg, seed).final_J - j_expert) < 1e-3);
  }
  SUBCASE("reinforcement phase improves on average") {
    RunConfig cfg = small_config();
    cfg.forced_switch = 5;
    cfg.adv_kind = AdvantageKind::kExactDp;
    std::vector<std::vector<double>> J(cfg.iterations);
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      const RunRecord rec = run_loki(m, expert, cfg, seed);
      for (int n = 0; n < cfg.iterations; ++n) J[n].push_back(rec.iterations[n].J_exact);
    }
    for (int n = 6; n + 1 < cfg.iterations; ++n) {
      const auto a = testutil::mean_se(J[n]);
      const auto b = testutil::mean_se(J[n + 1]);
      CHECK(b.mean <= a.mean + 2.0 * std::sqrt(a.se * a.se + b.se * b.se) + 1e-12);
    }
  }
}
