#include <benchmark/benchmark.h>

#include "lokilab/drivers.hpp"
#include "lokilab/mdp.hpp"
#include "lokilab/oracles.hpp"
#include "lokilab/sampling.hpp"

using namespace lokilab;

namespace {

struct Fixture {
  TabularMdp mdp = make_random_mdp(3, 64, 6, 0.95);
  PolicyParams policy = initial_policy(mdp, 1.0, 11);
  Eigen::MatrixXd probs = action_probs(policy);
  int horizon = tail_horizon(mdp);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

std::vector<std::vector<double>> unit_signals(const std::vector<Trajectory>& batch) {
  std::vector<std::vector<double>> out;
  for (const auto& t : batch) out.emplace_back(t.actions.size(), 1.0);
  return out;
}

void BM_SampleParallel(benchmark::State& state) {
  const auto& f = fixture();
  const int count = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(sample_trajectories(f.mdp, f.probs, count, f.horizon, 1));
  state.SetItemsProcessed(state.iterations() * count);
}

void BM_SampleSerial(benchmark::State& state) {
  const auto& f = fixture();
  const int count = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(sample_trajectories_serial(f.mdp, f.probs, count, f.horizon, 1));
  state.SetItemsProcessed(state.iterations() * count);
}

void BM_LikelihoodRatioParallel(benchmark::State& state) {
  const auto& f = fixture();
  const auto batch = sample_trajectories(f.mdp, f.probs, static_cast<int>(state.range(0)), f.horizon, 1);
  const auto signals = unit_signals(batch);
  for (auto _ : state)
    benchmark::DoNotOptimize(sampled_likelihood_ratio(f.policy, f.mdp.gamma, batch, signals));
}

void BM_LikelihoodRatioSerial(benchmark::State& state) {
  const auto& f = fixture();
  const auto batch = sample_trajectories(f.mdp, f.probs, static_cast<int>(state.range(0)), f.horizon, 1);
  const auto signals = unit_signals(batch);
  for (auto _ : state)
    benchmark::DoNotOptimize(sampled_likelihood_ratio_serial(f.policy, f.mdp.gamma, batch, signals));
}

}  // namespace

BENCHMARK(BM_SampleParallel)->Arg(16)->Arg(256);
BENCHMARK(BM_SampleSerial)->Arg(16)->Arg(256);
BENCHMARK(BM_LikelihoodRatioParallel)->Arg(16)->Arg(256);
BENCHMARK(BM_LikelihoodRatioSerial)->Arg(16)->Arg(256);

BENCHMARK_MAIN();
