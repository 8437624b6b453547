#include "lokilab/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "lokilab/parallel.hpp"

namespace lokilab {

CellError::CellError(Algorithm algorithm, std::uint64_t seed, const std::string& message)
    : Error(ErrorCode::kInternal,
            fmt::format("cell {}/seed {}: {}", to_string(algorithm), seed, message)),
      algorithm_(algorithm),
      seed_(seed) {}

std::optional<int> thread_cap_from_env() {
  const char* raw = std::getenv("LOKI_LAB_THREADS");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string_view s(raw);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || value < 1)
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("LOKI_LAB_THREADS must be a positive integer, got '{}'", s));
  return value;
}

Environment prepare_environment(const ExperimentConfig& config) {
  TabularMdp mdp = config.env.ends_with(".json") ? load_mdp(config.env) : make_zoo_mdp(config.env);
  ExpertPolicy expert = make_tempered_expert(mdp, config.expert_temperature);
  fit_expert_value(expert, mdp, config.expert_value_transitions, config.expert_value_seed,
                   config.run.value_ridge);
  return {std::move(mdp), std::move(expert)};
}

std::filesystem::path run_file(const ExperimentConfig& config, Algorithm alg, std::uint64_t seed) {
  return config.output_dir / fmt::format("{}_seed{}.jsonl", to_string(alg), seed);
}

std::filesystem::path summary_file(const ExperimentConfig& config, Algorithm alg) {
  return config.output_dir / fmt::format("summary_{}.csv", to_string(alg));
}

std::string run_to_jsonl(const RunRecord& record, const ExperimentConfig& config) {
  const double sign = config.report_as_reward ? -1.0 : 1.0;
  const std::string hash = hash_hex(config.hash);
  std::string out;
  for (const auto& it : record.iterations) {
    nlohmann::ordered_json line;
    line["iter"] = it.iter;
    line["phase"] = to_string(it.phase);
    line["J_exact"] = sign * it.J_exact;
    line["J_mc"] = sign * it.J_mc;
    line["grad_norm"] = it.grad_norm;
    line["kl_moved"] = it.kl_moved;
    line["eta"] = it.eta;
    line["expert_queries"] = it.expert_queries;
    line["K"] = record.K;
    line["seed"] = record.seed;
    line["algorithm"] = to_string(record.algorithm);
    line["config_hash"] = hash;
    out += line.dump() + "\n";
  }
  nlohmann::ordered_json last;
  last["iter"] = static_cast<int>(record.iterations.size()) + 1;
  last["phase"] = "final";
  last["J_exact"] = sign * record.final_J;
  last["expert_queries"] = record.expert_queries;
  last["K"] = record.K;
  last["seed"] = record.seed;
  last["algorithm"] = to_string(record.algorithm);
  last["config_hash"] = hash;
  out += last.dump() + "\n";
  return out;
}

std::vector<double> read_run_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot open run file '{}'", path.string()));
  std::vector<double> series;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kIo, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
    if (j.at("phase").get<std::string>() == "final") continue;
    if (j.at("iter").get<int>() != static_cast<int>(series.size()) + 1)
      throw Error(ErrorCode::kIo, fmt::format("{}:{}: iterations out of order", path.string(), line_no));
    series.push_back(j.at("J_exact").get<double>());
  }
  return series;
}

EnsembleSummary summarize(const std::string& algorithm, const std::vector<std::vector<double>>& series,
                          const std::string& config_hash) {
  if (series.empty()) throw Error(ErrorCode::kInvalidArgument, "summarize: no runs");
  const std::size_t n = series.front().size();
  for (const auto& s : series)
    if (s.size() != n) throw Error(ErrorCode::kDimensionMismatch, "summarize: runs differ in length");
  EnsembleSummary out;
  out.algorithm = algorithm;
  out.num_seeds = static_cast<int>(series.size());
  out.config_hash = config_hash;
  const double count = static_cast<double>(series.size());
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (const auto& s : series) mean += s[i];
    mean /= count;
    double ss = 0.0;
    for (const auto& s : series) ss += (s[i] - mean) * (s[i] - mean);
    out.iteration.push_back(static_cast<int>(i) + 1);
    out.mean_J.push_back(mean);
    out.std_J.push_back(series.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0);
  }
  return out;
}

EnsembleSummary summarize_run_files(const std::string& algorithm,
                                    const std::vector<std::filesystem::path>& files,
                                    const std::string& config_hash) {
  std::vector<std::vector<double>> series;
  for (const auto& f : files) series.push_back(read_run_series(f));
  return summarize(algorithm, series, config_hash);
}

std::string summary_to_csv(const EnsembleSummary& s) {
  std::string out = "algorithm,iteration,mean_J,std_J,num_seeds,config_hash\n";
  for (std::size_t i = 0; i < s.iteration.size(); ++i)
    out += fmt::format("{},{},{},{},{},{}\n", s.algorithm, s.iteration[i], s.mean_J[i], s.std_J[i],
                       s.num_seeds, s.config_hash);
  return out;
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

template <class T>
T parse_cell(const std::string& cell, const std::filesystem::path& path, int line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw Error(ErrorCode::kIo, fmt::format("{}:{}: bad number '{}'", path.string(), line_no, cell));
  return value;
}

}  // namespace

EnsembleSummary summary_from_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot open summary file '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line.rfind("algorithm,iteration,mean_J,std_J", 0) != 0)
    throw Error(ErrorCode::kIo, fmt::format("{}: missing summary header", path.string()));
  EnsembleSummary s;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_row(line);
    if (cells.size() != 6)
      throw Error(ErrorCode::kIo, fmt::format("{}:{}: expected 6 columns", path.string(), line_no));
    if (s.iteration.empty()) {
      s.algorithm = cells[0];
      s.num_seeds = parse_cell<int>(cells[4], path, line_no);
      s.config_hash = cells[5];
    } else if (cells[0] != s.algorithm) {
      throw Error(ErrorCode::kIo, fmt::format("{}:{}: mixed algorithms", path.string(), line_no));
    }
    s.iteration.push_back(parse_cell<int>(cells[1], path, line_no));
    s.mean_J.push_back(parse_cell<double>(cells[2], path, line_no));
    s.std_J.push_back(parse_cell<double>(cells[3], path, line_no));
  }
  return s;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot write '{}'", tmp.string()));
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, fmt::format("write to '{}' failed", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const Environment env = prepare_environment(config);
  std::filesystem::create_directories(config.output_dir);

  struct Cell {
    Algorithm alg;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Algorithm a : config.algorithms)
    for (std::uint64_t s : config.seeds) cells.push_back({a, s});

  parallel_for(static_cast<int>(cells.size()), [&](int i) {
    const Cell& c = cells[static_cast<std::size_t>(i)];
    try {
      const RunRecord rec = run_algorithm(c.alg, env.mdp, &env.expert, config.run, c.seed);
      write_atomic(run_file(config, c.alg, c.seed), run_to_jsonl(rec, config));
    } catch (const std::exception& e) {
      throw CellError(c.alg, c.seed, e.what());
    }
  });

  ExperimentResult result;
  const std::string hash = hash_hex(config.hash);
  for (Algorithm a : config.algorithms) {
    std::vector<std::filesystem::path> files;
    for (std::uint64_t s : config.seeds) files.push_back(run_file(config, a, s));
    const auto summary = summarize_run_files(to_string(a), files, hash);
    write_atomic(summary_file(config, a), summary_to_csv(summary));
    result.run_files.insert(result.run_files.end(), files.begin(), files.end());
    result.summary_files.push_back(summary_file(config, a));
  }
  return result;
}

std::string plotdata(const std::vector<std::filesystem::path>& summary_files) {
  if (summary_files.empty()) throw Error(ErrorCode::kInvalidArgument, "plotdata: no input files");
  std::map<std::string, std::pair<EnsembleSummary, std::filesystem::path>> by_alg;
  std::optional<std::pair<std::size_t, std::filesystem::path>> length;
  for (const auto& path : summary_files) {
    EnsembleSummary s = summary_from_csv(path);
    if (!length) {
      length = {s.iteration.size(), path};
    } else if (length->first != s.iteration.size()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  fmt::format("plotdata: '{}' has {} iterations but '{}' has {}", length->second.string(),
                              length->first, path.string(), s.iteration.size()));
    }
    if (auto it = by_alg.find(s.algorithm); it != by_alg.end())
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("plotdata: algorithm '{}' appears in both '{}' and '{}'", s.algorithm,
                              it->second.second.string(), path.string()));
    const std::string name = s.algorithm;
    by_alg.emplace(name, std::make_pair(std::move(s), path));
  }
  std::string out = "algorithm,iteration,mean_J,half_std\n";
  for (const auto& [name, entry] : by_alg) {
    const EnsembleSummary& s = entry.first;
    std::vector<std::size_t> order(s.iteration.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.iteration[a] < s.iteration[b]; });
    for (std::size_t i : order)
      out += fmt::format("{},{},{},{}\n", name, s.iteration[i], s.mean_J[i], 0.5 * s.std_J[i]);
  }
  return out;
}

}  // namespace lokilab
