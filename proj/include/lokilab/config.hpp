#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lokilab/drivers.hpp"
#include "lokilab/error.hpp"

namespace lokilab {

/// Invalid configuration. `line` is 0 when the problem is not tied to one line.
class ConfigError : public Error {
 public:
  ConfigError(std::string source, int line, std::string key, const std::string& message);

  const std::string& source() const { return source_; }
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  std::string source_;
  int line_;
  std::string key_;
};

struct ConfigEntry {
  std::string value;
  int line = 0;
};

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Duplicate keys and lines without `=` are errors.
std::map<std::string, ConfigEntry> parse_key_values(std::string_view text,
                                                    const std::string& source);

struct ExperimentConfig {
  std::string env = "chain2";  // zoo name or path to an MDP json file
  std::vector<Algorithm> algorithms;
  RunConfig run;
  double expert_temperature = 1.5;
  long expert_value_transitions = 10000;
  std::uint64_t expert_value_seed = 7;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir = "out";
  bool report_as_reward = false;
  std::uint64_t hash = 0;  // FNV-1a of the normalized key/value pairs
};

/// Keys accepted by parse_experiment_config, sorted.
std::vector<std::string> config_keys();

/// Parses and validates everything; relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(std::string_view text, const std::string& source,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::uint64_t fnv1a(std::string_view bytes);
std::string hash_hex(std::uint64_t hash);

}  // namespace lokilab
