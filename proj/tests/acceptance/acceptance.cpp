// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <fmt/core.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <unistd.h>

#include "lokilab/drivers.hpp"
#include "lokilab/exact.hpp"
#include "lokilab/lq.hpp"
#include "lokilab/oracles.hpp"
#include "lokilab/sampling.hpp"
#include "lokilab/theory.hpp"

using namespace lokilab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& ref) {
  const double n = ref.norm();
  return (a - ref).norm() / (n > 1e-12 ? n : 1.0);
}

Eigen::MatrixXd random_probs(int S, int A, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd p(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) p(s, a) = u(gen);
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

PolicyParams random_tabular(int S, int A, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  PolicyParams p = PolicyParams::tabular(S, A);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta(i) = nd(gen);
  return p;
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double se_of(const std::vector<double>& x) {
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / (static_cast<double>(x.size()) - 1.0) / static_cast<double>(x.size()));
}

double median_of(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

Outcome suites_pass(const std::vector<std::string>& suites) {
  Outcome out{true, ""};
  for (const auto& suite : suites)
    for (const auto& r : run_suite(suite)) {
      out.pass = out.pass && r.pass;
      out.detail += fmt::format("{} slack={:.3g}{}; ", r.name, r.slack, r.pass ? "" : " FAIL");
    }
  return out;
}

// ---- criteria ----

Outcome performance_difference_identity() {
  std::mt19937_64 gen(101);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const int S = 2 + i % 7, A = 2 + i % 4;
    const TabularMdp m = make_random_mdp(5000 + static_cast<std::uint64_t>(i), S, A, 0.5 + 0.45 * (i % 10) / 9.0);
    const Eigen::MatrixXd pi = random_probs(S, A, gen);
    const Eigen::MatrixXd pi2 = random_probs(S, A, gen);
    const ExactSolution a = exact_eval(m, pi);
    const ExactSolution b = exact_eval(m, pi2);
    const double lhs = a.total_cost - b.total_cost;
    const double rhs = a.state_dist.dot(expect_actions(pi, b.adv)) / (1.0 - m.gamma);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return {worst < 1e-9, fmt::format("max |lhs - rhs| = {:.3g} over 200 instances", worst)};
}

LqTask random_lq(std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  const int n = 2 + static_cast<int>(gen() % 3), k = 1 + static_cast<int>(gen() % 2);
  LqTask t;
  t.A = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return nd(gen); });
  const double rho = t.A.eigenvalues().cwiseAbs().maxCoeff();
  t.A *= 0.8 / rho;
  t.B = Eigen::MatrixXd::NullaryExpr(n, k, [&] { return nd(gen); });
  const Eigen::MatrixXd M = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return nd(gen); });
  t.Q = M * M.transpose() / n + 0.1 * Eigen::MatrixXd::Identity(n, n);
  t.R = Eigen::MatrixXd::Identity(k, k) * (0.5 + std::uniform_real_distribution<double>(0, 1)(gen));
  t.init_cov = Eigen::MatrixXd::Identity(n, n);
  t.gamma = 0.9;
  return t;
}

Outcome exact_gradients() {
  std::mt19937_64 gen(202);
  double worst_pg = 0.0, worst_dag = 0.0, worst_dpg = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int S = 2 + i % 6, A = 2 + i % 3;
    const TabularMdp m = make_random_mdp(7000 + static_cast<std::uint64_t>(i), S, A, 0.9);
    const PolicyParams p = random_tabular(S, A, gen);
    auto scaled_J = [&](const Eigen::VectorXd& th) {
      PolicyParams q = p;
      q.theta = th;
      return (1.0 - m.gamma) * exact_eval(m, q).total_cost;
    };
    worst_pg = std::max(worst_pg, relative_error(pg_exact(m, p).g, central_difference(scaled_J, p.theta)));

    const ExpertPolicy expert = make_tempered_expert(m, 0.5 + 0.1 * (i % 10));
    const Eigen::VectorXd d = exact_eval(m, p).state_dist;
    auto kl = [&](const Eigen::VectorXd& th) {
      PolicyParams q = p;
      q.theta = th;
      const Eigen::MatrixXd pi = action_probs(q);
      double total = 0.0;
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
          total += d(s) * expert.probs(s, a) * std::log(expert.probs(s, a) / pi(s, a));
      return total;
    };
    worst_dag = std::max(worst_dag, relative_error(daggered_oracle(m, p, expert, {}, {}, OracleMode::kExact).g,
                                                   central_difference(kl, p.theta)));

    const LqTask task = random_lq(gen);
    std::normal_distribution<double> nd(0.0, 0.05);
    const Eigen::MatrixXd Kstar = lq_optimal_gain(task);
    Eigen::MatrixXd K;
    do {
      K = Kstar + Eigen::MatrixXd::NullaryExpr(task.action_dim(), task.state_dim(), [&] { return nd(gen); });
    } while (std::sqrt(task.gamma) * (task.A + task.B * K).eigenvalues().cwiseAbs().maxCoeff() >= 0.95);
    const PolicyParams lin = PolicyParams::deterministic_linear(K);
    auto lq_J = [&](const Eigen::VectorXd& th) {
      PolicyParams q = lin;
      q.theta = th;
      return (1.0 - task.gamma) * lq_evaluate(task, q).total_cost;
    };
    worst_dpg = std::max(worst_dpg, relative_error(dpg_oracle(task, lin).g, central_difference(lq_J, lin.theta)));
  }
  const bool pass = worst_pg < 1e-5 && worst_dag < 1e-5 && worst_dpg < 1e-5;
  return {pass, fmt::format("max relative error pg {:.3g}, daggered {:.3g}, dpg {:.3g} over 50 instances", worst_pg,
                            worst_dag, worst_dpg)};
}

Outcome oracle_unification() {
  std::mt19937_64 gen(303);
  double worst_slols = 0.0, worst_thor = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int S = 3 + i % 5, A = 2 + i % 3;
    const TabularMdp m = make_random_mdp(9000 + static_cast<std::uint64_t>(i), S, A, 0.85);
    const ExpertPolicy expert = make_tempered_expert(m, 0.7);
    const PolicyParams p = random_tabular(S, A, gen);
    const auto batch = sample_trajectories(m, p, 16, tail_horizon(m), 40 + static_cast<std::uint64_t>(i));
    AdvantageEstimator gae_est;
    gae_est.kind = AdvantageKind::kGae;
    gae_est.value = fit_value(batch, S, m.gamma).value;
    const AdvantageEstimator exact_est = exact_value_estimator(exact_eval(m, p));
    for (OracleMode mode : {OracleMode::kSampled, OracleMode::kExact}) {
      const AdvantageEstimator& est = mode == OracleMode::kExact ? exact_est : gae_est;
      const Eigen::VectorXd pg = pg_oracle(m, p, est, batch, mode).g;
      const Eigen::VectorXd ag = aggrevated_oracle(m, p, expert, batch, mode).g;
      worst_slols = std::max(worst_slols, (slols_oracle(m, p, expert, est, 0.0, batch, mode).g - pg).cwiseAbs().maxCoeff());
      worst_slols = std::max(worst_slols, (slols_oracle(m, p, expert, est, 1.0, batch, mode).g - ag).cwiseAbs().maxCoeff());
    }
    const Eigen::VectorXd ag = aggrevated_oracle(m, p, expert, batch, OracleMode::kSampled).g;
    worst_thor = std::max(worst_thor, (thor_oracle(m, p, expert, 1, batch, false).g - ag).cwiseAbs().maxCoeff());
  }
  return {worst_slols <= 1e-12 && worst_thor <= 1e-12,
          fmt::format("max |SLOLS - endpoint| = {:.3g}, max |THOR(H=1) - AggreVaTeD| = {:.3g} over 20 shared batches",
                      worst_slols, worst_thor)};
}

Outcome regret_bound() { return suites_pass({"prop2"}); }

Outcome suffix_bound() {
  Outcome out = suites_pass({"thm1"});
  const auto sw = run_check("switch.law").front();
  out.pass = out.pass && sw.pass;
  out.detail += fmt::format("switch.law chi2={:.3g} < {:.3g}", sw.empirical_lhs, sw.theoretical_rhs);
  return out;
}

Outcome loki_end_to_end() {
  const TabularMdp m = make_zoo_mdp("gridworld-4x4");
  ExpertPolicy expert = make_tempered_expert(m, 1.5);
  fit_expert_value(expert, m, 10000, 7);
  const double Jstar = exact_eval(m, expert.probs).total_cost;
  RunConfig cfg;
  cfg.iterations = 100;
  cfg.batch_size = 20;

  std::map<Algorithm, std::vector<RunRecord>> runs;
  for (Algorithm a : {Algorithm::kLoki, Algorithm::kPg, Algorithm::kIdeal, Algorithm::kDaggered})
    for (std::uint64_t seed = 1; seed <= 25; ++seed) runs[a].push_back(run_algorithm(a, m, &expert, cfg, seed));

  auto reach = [&](const std::vector<RunRecord>& rs) {
    std::vector<double> out;
    for (const auto& r : rs) {
      double n = cfg.iterations + 1;
      for (const auto& it : r.iterations)
        if (it.J_exact <= Jstar) {
          n = it.iter;
          break;
        }
      out.push_back(n);
    }
    return median_of(out);
  };
  auto finals = [](const std::vector<RunRecord>& rs) {
    std::vector<double> out;
    for (const auto& r : rs) out.push_back(r.final_J);
    return out;
  };
  const double reach_loki = reach(runs[Algorithm::kLoki]);
  const double reach_pg = reach(runs[Algorithm::kPg]);
  const bool a = reach_loki < reach_pg;

  const auto fl = finals(runs[Algorithm::kLoki]);
  const auto fi = finals(runs[Algorithm::kIdeal]);
  const double se = std::hypot(se_of(fl), se_of(fi));
  const bool b = std::abs(mean_of(fl) - mean_of(fi)) <= 2.0 * se;

  // Realizability margin: how far imitation iterates dip below J(pi*) once
  // settled, over the second half of control runs on disjoint seeds.
  double margin = 0.0;
  for (std::uint64_t seed = 1001; seed <= 1025; ++seed)
    for (const auto& it : run_algorithm(Algorithm::kDaggered, m, &expert, cfg, seed).iterations)
      if (it.iter > cfg.iterations / 2) margin = std::max(margin, Jstar - it.J_exact);
  double beat = -INFINITY;
  for (double j : finals(runs[Algorithm::kDaggered])) beat = std::max(beat, Jstar - j);
  const bool c = beat <= margin;

  return {a && b && c,
          fmt::format("(a) median reach loki {} < pg {}: {}; (b) |loki {:.4f} - ideal {:.4f}| <= 2 SE {:.4f}: {}; "
                      "(c) daggered beats J* by {:.4f} <= delta_imit {:.4f}: {}",
                      reach_loki, reach_pg, a ? "ok" : "no", mean_of(fl), mean_of(fi), 2.0 * se, b ? "ok" : "no", beat,
                      margin, c ? "ok" : "no")};
}

Outcome mixed_oracle_inequality() { return suites_pass({"thm3"}); }

Outcome appendix_machinery() {
  Outcome out = suites_pass({"prox", "lemma5", "cnm"});
  double worst = 0.0;
  for (int d = 0; d <= 6; ++d)
    for (int n : {1, 2, 3, 10, 20, 25, 100, 1000, 100000}) {
      const long double ref = d == 0 ? std::log(static_cast<long double>(n)) + 1.0L
                                     : 8.0L * d / 3.0L * std::exp(static_cast<long double>(d) / n);
      worst = std::max(worst, static_cast<double>(std::abs(c_nm_constant(d, n) - ref) / ref));
    }
  out.pass = out.pass && worst <= 1e-12;
  out.detail += fmt::format("C_NM max relative deviation {:.3g}", worst);
  return out;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / fmt::format("lokilab_accept_{}", ::getpid());
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "exp.cfg");
    cfg << "env = gridworld-4x4\n"
           "algorithms = loki, pg, daggered, aggrevated, slols, thor, ideal\n"
           "iterations = 25\n"
           "batch_size = 8\n"
           "switch.n_min = 4\n"
           "switch.n_max = 10\n"
           "seeds = 1-6\n";
  }
  std::vector<std::map<std::string, std::string>> outputs;
  bool ok = true;
  for (const char* threads : {"1", "3"}) {
    const std::string cmd = fmt::format("cd '{}' && rm -rf out && LOKI_LAB_THREADS={} '{}' run exp.cfg > /dev/null 2>&1",
                                        root.string(), threads, LOKILAB_CLI_PATH);
    const int status = std::system(cmd.c_str());
    ok = ok && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    outputs.push_back(ok ? snapshot(root / "out") : std::map<std::string, std::string>{});
  }
  fs::remove_all(root);
  const bool same = ok && !outputs[0].empty() && outputs[0] == outputs[1];
  return {same, fmt::format("{} output files from two `run` invocations (1 and 3 workers): {}", outputs[0].size(),
                            same ? "bitwise identical" : "differ or failed")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0: no runtime limit
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "performance-difference identity", 5.0, performance_difference_identity},
      {2, "exact-gradient correctness", 30.0, exact_gradients},
      {3, "oracle unification", 0.0, oracle_unification},
      {4, "regret bound", 10.0, regret_bound},
      {5, "suffix bound and switch law", 120.0, suffix_bound},
      {6, "LOKI end-to-end", 300.0, loki_end_to_end},
      {7, "mixed-oracle inequality", 0.0, mixed_oracle_inequality},
      {8, "prox, weighted regret and C_NM", 0.0, appendix_machinery},
      {9, "determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, fmt::format("error: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s <= 0.0 || secs < c.budget_s;
    const bool pass = out.pass && in_time;
    failed += pass ? 0 : 1;
    const std::string budget = c.budget_s > 0.0 ? fmt::format(" (budget {:.0f}s)", c.budget_s) : "";
    fmt::print("criterion {}: {} {} [{:.2f}s{}] {}\n", c.id, pass ? "PASS" : "FAIL", c.name, secs, budget, out.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
