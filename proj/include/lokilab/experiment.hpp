#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lokilab/config.hpp"
#include "lokilab/drivers.hpp"
#include "lokilab/mdp.hpp"
#include "lokilab/oracles.hpp"

namespace lokilab {

/// Run failure tagged with the (algorithm, seed) cell.
class CellError : public Error {
 public:
  CellError(Algorithm algorithm, std::uint64_t seed, const std::string& message);

  Algorithm algorithm() const { return algorithm_; }
  std::uint64_t seed() const { return seed_; }

 private:
  Algorithm algorithm_;
  std::uint64_t seed_;
};

/// Worker cap from LOKI_LAB_THREADS; nullopt when unset. Throws on a bad value.
std::optional<int> thread_cap_from_env();

struct Environment {
  TabularMdp mdp;
  ExpertPolicy expert;
};

/// MDP from the zoo or a json file, tempered expert with a fitted value.
Environment prepare_environment(const ExperimentConfig& config);

/// Per-iteration mean and sample standard deviation of J across seeds.
struct EnsembleSummary {
  std::string algorithm;
  std::vector<int> iteration;
  std::vector<double> mean_J;
  std::vector<double> std_J;
  int num_seeds = 0;
  std::string config_hash;
};

std::filesystem::path run_file(const ExperimentConfig& config, Algorithm alg, std::uint64_t seed);
std::filesystem::path summary_file(const ExperimentConfig& config, Algorithm alg);

/// JSON lines of a run: one object per iteration, then a `final` line.
std::string run_to_jsonl(const RunRecord& record, const ExperimentConfig& config);

/// J_exact series of the iteration lines of a run file.
std::vector<double> read_run_series(const std::filesystem::path& path);

EnsembleSummary summarize(const std::string& algorithm, const std::vector<std::vector<double>>& series,
                          const std::string& config_hash);
EnsembleSummary summarize_run_files(const std::string& algorithm,
                                    const std::vector<std::filesystem::path>& files,
                                    const std::string& config_hash);

std::string summary_to_csv(const EnsembleSummary& summary);
EnsembleSummary summary_from_csv(const std::filesystem::path& path);

/// Writes through a temporary file and renames.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

struct ExperimentResult {
  std::vector<std::filesystem::path> run_files;
  std::vector<std::filesystem::path> summary_files;
};

/// All (algorithm x seed) cells in parallel, then the summaries from the
/// written run files. Throws CellError for the first failing cell in cell order.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Long-format table `algorithm,iteration,mean_J,half_std` sorted by algorithm
/// then iteration. Inputs must agree on the iteration count.
std::string plotdata(const std::vector<std::filesystem::path>& summary_files);

}  // namespace lokilab
