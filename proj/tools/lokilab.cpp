#include <fmt/format.h>
#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lokilab/config.hpp"
#include "lokilab/experiment.hpp"
#include "lokilab/mdp.hpp"
#include "lokilab/theory.hpp"

using namespace lokilab;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int cmd_run(const std::string& config_path) {
  ExperimentConfig config;
  try {
    config = load_experiment_config(config_path);
    if (auto cap = thread_cap_from_env()) omp_set_num_threads(std::min(*cap, omp_get_max_threads()));
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  }
  try {
    const ExperimentResult result = run_experiment(config);
    for (const auto& f : result.summary_files) fmt::print("{}\n", f.string());
  } catch (const CellError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitFailure;
  }
  return 0;
}

int cmd_verify(const std::string& target, bool with_terms) {
  const auto suites = suite_names();
  const auto checks = registered_checks();
  const bool is_suite = std::find(suites.begin(), suites.end(), target) != suites.end();
  const bool is_check = std::any_of(checks.begin(), checks.end(),
                                    [&](const CheckEntry& c) { return c.name == target; });
  if (!is_suite && !is_check) {
    fmt::print(stderr, "error: unknown suite or check '{}'\n", target);
    return kExitUsage;
  }
  std::vector<std::string> names;
  for (const auto& c : checks)
    if (is_check ? c.name == target : (target == "all" || c.suite == target)) names.push_back(c.name);

  bool all_pass = true;
  for (const auto& name : names) {
    try {
      for (const BoundReport& r : run_check(name)) {
        nlohmann::ordered_json j;
        j["name"] = r.name;
        j["lhs"] = r.empirical_lhs;
        j["rhs"] = r.theoretical_rhs;
        j["slack"] = r.slack;
        j["tolerance"] = r.tolerance;
        j["pass"] = r.pass;
        if (with_terms) j["terms"] = r.terms;
        fmt::print("{}\n", j.dump());
        all_pass = all_pass && r.pass;
      }
    } catch (const std::exception& e) {
      nlohmann::ordered_json j;
      j["name"] = name;
      j["pass"] = false;
      j["error"] = e.what();
      fmt::print("{}\n", j.dump());
      all_pass = false;
    }
    std::fflush(stdout);
  }
  return all_pass ? 0 : kExitFailure;
}

int cmd_plotdata(const std::vector<std::string>& files, const std::string& output) {
  try {
    std::vector<std::filesystem::path> paths(files.begin(), files.end());
    const std::string table = plotdata(paths);
    if (output.empty()) {
      fmt::print("{}", table);
    } else {
      write_atomic(output, table);
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  }
  return 0;
}

int cmd_zoo_list() {
  for (const auto& name : zoo_names()) {
    if (name.find('(') != std::string::npos) {
      fmt::print("{}\tdense random MDP\n", name);
      continue;
    }
    const TabularMdp mdp = make_zoo_mdp(name);
    fmt::print("{}\tS={} A={} gamma={}\n", name, mdp.num_states, mdp.num_actions, mdp.gamma);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lokilab: imitate-then-reinforce experiments and bound checks"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run every (algorithm, seed) cell of a config");
  run->add_option("config", config_path, "Config file")->required();

  std::string target;
  bool with_terms = false;
  auto* verify = app.add_subcommand("verify", "Run a bound-check suite or a single check");
  verify->add_option("suite", target, "Suite or check name")->required();
  verify->add_flag("--terms", with_terms, "Include the bound terms in each report");

  std::vector<std::string> files;
  std::string output;
  auto* plot = app.add_subcommand("plotdata", "Merge summary CSVs into a long-format table");
  plot->add_option("files", files, "Summary CSV files")->required();
  plot->add_option("-o,--output", output, "Output file (default stdout)");

  auto* zoo = app.add_subcommand("zoo", "Built-in environments");
  auto* zoo_list = zoo->add_subcommand("list", "List the zoo");
  zoo->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (*run) return cmd_run(config_path);
  if (*verify) return cmd_verify(target, with_terms);
  if (*plot) return cmd_plotdata(files, output);
  if (*zoo_list) return cmd_zoo_list();
  return kExitUsage;
}
