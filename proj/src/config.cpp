#include "lokilab/config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "lokilab/mdp.hpp"

namespace lokilab {

ConfigError::ConfigError(std::string source, int line, std::string key, const std::string& message)
    : Error(ErrorCode::kInvalidArgument,
            line > 0 ? fmt::format("{}:{}: {}: {}", source, line, key, message)
                     : fmt::format("{}: {}: {}", source, key, message)),
      source_(std::move(source)),
      line_(line),
      key_(std::move(key)) {}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string_view::npos ? s.size() : comma;
    out.emplace_back(trim(s.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Thrown by value parsers; rewrapped with the source position of the key.
struct BadValue {
  std::string message;
};

template <class T>
T parse_number(std::string_view s) {
  T value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty())
    throw BadValue{fmt::format("'{}' is not a valid number", s)};
  return value;
}

double parse_double(std::string_view s) {
  const double v = parse_number<double>(s);
  if (!std::isfinite(v)) throw BadValue{fmt::format("'{}' is not finite", s)};
  return v;
}

double positive(std::string_view s) {
  const double v = parse_double(s);
  if (!(v > 0.0)) throw BadValue{fmt::format("must be positive, got {}", s)};
  return v;
}

double nonnegative(std::string_view s) {
  const double v = parse_double(s);
  if (!(v >= 0.0)) throw BadValue{fmt::format("must be >= 0, got {}", s)};
  return v;
}

double unit_interval(std::string_view s) {
  const double v = parse_double(s);
  if (!(v >= 0.0 && v <= 1.0)) throw BadValue{fmt::format("must lie in [0, 1], got {}", s)};
  return v;
}

int int_at_least(std::string_view s, int lo) {
  const int v = parse_number<int>(s);
  if (v < lo) throw BadValue{fmt::format("must be >= {}, got {}", lo, v)};
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw BadValue{fmt::format("expected true or false, got '{}'", s)};
}

template <class Enum>
Enum parse_enum(std::string_view s, std::initializer_list<Enum> allowed) {
  std::string names;
  for (Enum e : allowed) {
    if (s == to_string(e)) return e;
    names += names.empty() ? "" : ", ";
    names += to_string(e);
  }
  throw BadValue{fmt::format("unknown value '{}' (expected one of {})", s, names)};
}

std::vector<std::uint64_t> parse_seeds(std::string_view s) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(s)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(parse_number<std::uint64_t>(item));
      continue;
    }
    const auto lo = parse_number<std::uint64_t>(trim(std::string_view(item).substr(0, dash)));
    const auto hi = parse_number<std::uint64_t>(trim(std::string_view(item).substr(dash + 1)));
    if (hi < lo) throw BadValue{fmt::format("empty seed range '{}'", item)};
    if (hi - lo >= 100000) throw BadValue{fmt::format("seed range '{}' is too long", item)};
    for (auto v = lo; v <= hi; ++v) seeds.push_back(v);
  }
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw BadValue{"seeds must be distinct"};
  return seeds;
}

constexpr std::initializer_list<OracleKind> kConfigOracles = {
    OracleKind::kPg, OracleKind::kDaggered, OracleKind::kAggrevated, OracleKind::kSlols,
    OracleKind::kThor};

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"env", [](ExperimentConfig& c, std::string_view v) {
         if (v.empty()) throw BadValue{"must not be empty"};
         c.env = std::string(v);
       }},
      {"algorithms", [](ExperimentConfig& c, std::string_view v) {
         c.algorithms.clear();
         for (const auto& name : split_list(v)) {
           const Algorithm a = parse_enum(name, {Algorithm::kLoki, Algorithm::kPg, Algorithm::kDaggered,
                                                 Algorithm::kAggrevated, Algorithm::kSlols,
                                                 Algorithm::kThor, Algorithm::kIdeal});
           if (std::find(c.algorithms.begin(), c.algorithms.end(), a) != c.algorithms.end())
             throw BadValue{fmt::format("'{}' listed twice", name)};
           c.algorithms.push_back(a);
         }
       }},
      {"oracle.kind", [](ExperimentConfig& c, std::string_view v) {
         const OracleKind k = parse_enum(v, kConfigOracles);
         c.algorithms = {algorithm_from_string(to_string(k))};
       }},
      {"oracle.mode", [](ExperimentConfig& c, std::string_view v) {
         c.run.mode = parse_enum(v, {OracleMode::kExact, OracleMode::kSampled});
       }},
      {"oracle.lambda", [](ExperimentConfig& c, std::string_view v) { c.run.slols_lambda = unit_interval(v); }},
      {"oracle.horizon_H", [](ExperimentConfig& c, std::string_view v) { c.run.thor_H = int_at_least(v, 1); }},
      {"oracle.thor_baseline", [](ExperimentConfig& c, std::string_view v) { c.run.thor_baseline = parse_bool(v); }},
      {"oracle.surrogate", [](ExperimentConfig& c, std::string_view v) {
         c.run.surrogate.kind = parse_enum(v, {SurrogateKind::kKlExpertLearner, SurrogateKind::kSquaredDistance,
                                               SurrogateKind::kExpertAdvantage});
       }},
      {"oracle.surrogate.c_star", [](ExperimentConfig& c, std::string_view v) { c.run.surrogate.c_star = positive(v); }},
      {"oracle.adv.kind", [](ExperimentConfig& c, std::string_view v) {
         c.run.adv_kind = parse_enum(v, {AdvantageKind::kExactDp, AdvantageKind::kGae, AdvantageKind::kMcTruncated});
       }},
      {"oracle.adv.lambda", [](ExperimentConfig& c, std::string_view v) { c.run.gae_lambda = unit_interval(v); }},
      {"oracle.adv.horizon", [](ExperimentConfig& c, std::string_view v) { c.run.mc_horizon = int_at_least(v, 0); }},
      {"step.mode", [](ExperimentConfig& c, std::string_view v) {
         if (v == "trust-region") c.run.step_mode = StepMode::kTrustRegion;
         else if (v == "schedule") c.run.step_mode = StepMode::kSchedule;
         else throw BadValue{fmt::format("unknown value '{}' (expected one of trust-region, schedule)", v)};
       }},
      {"bregman.kind", [](ExperimentConfig& c, std::string_view v) {
         const BregmanKind k = parse_enum(v, {BregmanKind::kQuadratic, BregmanKind::kNegEntropy,
                                              BregmanKind::kFisherQuadratic});
         if (k == BregmanKind::kNegEntropy) throw BadValue{"neg-entropy does not apply to softmax logits"};
         c.run.bregman = k;
       }},
      {"schedule.kind", [](ExperimentConfig& c, std::string_view v) {
         c.run.imitation_schedule.kind = parse_enum(v, {ScheduleKind::kConstant, ScheduleKind::kProp2, ScheduleKind::kThm1});
       }},
      {"schedule.eta", [](ExperimentConfig& c, std::string_view v) { c.run.imitation_schedule.eta = positive(v); }},
      {"schedule.sigma_hat", [](ExperimentConfig& c, std::string_view v) { c.run.imitation_schedule.sigma_hat = positive(v); }},
      {"schedule.d", [](ExperimentConfig& c, std::string_view v) { c.run.imitation_schedule.d = int_at_least(v, 0); }},
      {"schedule.reinforce.kind", [](ExperimentConfig& c, std::string_view v) {
         c.run.reinforce_schedule.kind = parse_enum(v, {ScheduleKind::kConstant, ScheduleKind::kProp2, ScheduleKind::kThm1});
       }},
      {"schedule.reinforce.eta", [](ExperimentConfig& c, std::string_view v) { c.run.reinforce_schedule.eta = positive(v); }},
      {"schedule.reinforce.sigma_hat", [](ExperimentConfig& c, std::string_view v) { c.run.reinforce_schedule.sigma_hat = positive(v); }},
      {"schedule.reinforce.d", [](ExperimentConfig& c, std::string_view v) { c.run.reinforce_schedule.d = int_at_least(v, 0); }},
      {"trust_region.kl", [](ExperimentConfig& c, std::string_view v) { c.run.kl_reinforce = positive(v); }},
      {"trust_region.kl_imitation", [](ExperimentConfig& c, std::string_view v) { c.run.kl_imitation = positive(v); }},
      {"trust_region.backtrack", [](ExperimentConfig& c, std::string_view v) { c.run.kl_backtrack = parse_bool(v); }},
      {"switch.n_min", [](ExperimentConfig& c, std::string_view v) { c.run.switch_dist.n_min = int_at_least(v, 1); }},
      {"switch.n_max", [](ExperimentConfig& c, std::string_view v) { c.run.switch_dist.n_max = int_at_least(v, 2); }},
      {"switch.d", [](ExperimentConfig& c, std::string_view v) { c.run.switch_dist.d = int_at_least(v, 0); }},
      {"switch.forced", [](ExperimentConfig& c, std::string_view v) { c.run.forced_switch = int_at_least(v, 0); }},
      {"expert.temperature", [](ExperimentConfig& c, std::string_view v) { c.expert_temperature = positive(v); }},
      {"expert.value_transitions", [](ExperimentConfig& c, std::string_view v) {
         c.expert_value_transitions = int_at_least(v, 1);
       }},
      {"expert.value_seed", [](ExperimentConfig& c, std::string_view v) {
         c.expert_value_seed = parse_number<std::uint64_t>(v);
       }},
      {"fisher.damping", [](ExperimentConfig& c, std::string_view v) { c.run.fisher_damping = positive(v); }},
      {"value.ridge", [](ExperimentConfig& c, std::string_view v) { c.run.value_ridge = positive(v); }},
      {"init.scale", [](ExperimentConfig& c, std::string_view v) { c.run.init_scale = nonnegative(v); }},
      {"beta", [](ExperimentConfig& c, std::string_view v) { c.run.beta = nonnegative(v); }},
      {"iterations", [](ExperimentConfig& c, std::string_view v) { c.run.iterations = int_at_least(v, 1); }},
      {"batch_size", [](ExperimentConfig& c, std::string_view v) { c.run.batch_size = int_at_least(v, 1); }},
      {"horizon", [](ExperimentConfig& c, std::string_view v) { c.run.horizon = int_at_least(v, 0); }},
      {"seeds", [](ExperimentConfig& c, std::string_view v) { c.seeds = parse_seeds(v); }},
      {"output_dir", [](ExperimentConfig& c, std::string_view v) {
         if (v.empty()) throw BadValue{"must not be empty"};
         c.output_dir = std::string(v);
       }},
      {"report_as_reward", [](ExperimentConfig& c, std::string_view v) { c.report_as_reward = parse_bool(v); }},
  };
  return table;
}

}  // namespace

std::map<std::string, ConfigEntry> parse_key_values(std::string_view text, const std::string& source) {
  std::map<std::string, ConfigEntry> entries;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source, line_no, std::string(line), "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(source, line_no, "<empty>", "missing key before '='");
    if (auto it = entries.find(key); it != entries.end())
      throw ConfigError(source, line_no, key, fmt::format("duplicate key (first set on line {})", it->second.line));
    entries.emplace(key, ConfigEntry{std::string(trim(line.substr(eq + 1))), line_no});
  }
  return entries;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

ExperimentConfig parse_experiment_config(std::string_view text, const std::string& source,
                                         const std::filesystem::path& base_dir) {
  const auto entries = parse_key_values(text, source);
  ExperimentConfig cfg;
  const auto& table = setters();

  std::string normalized;
  for (const auto& [key, entry] : entries) {
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError(source, entry.line, key, "unknown key");
    try {
      it->second(cfg, entry.value);
    } catch (const BadValue& bad) {
      throw ConfigError(source, entry.line, key, bad.message);
    } catch (const Error& e) {
      throw ConfigError(source, entry.line, key, e.what());
    }
    normalized += key + "=" + entry.value + "\n";
  }
  cfg.hash = fnv1a(normalized);

  auto line_of = [&](const std::string& key) {
    auto it = entries.find(key);
    return it == entries.end() ? 0 : it->second.line;
  };

  if (entries.count("algorithms") && entries.count("oracle.kind"))
    throw ConfigError(source, line_of("oracle.kind"), "oracle.kind", "conflicts with 'algorithms'");
  if (cfg.algorithms.empty())
    throw ConfigError(source, 0, "algorithms", "required (or set oracle.kind)");
  if (cfg.seeds.empty()) throw ConfigError(source, 0, "seeds", "required and nonempty");

  const auto& sw = cfg.run.switch_dist;
  if (!cfg.run.forced_switch && sw.n_max < 2 * sw.n_min)
    throw ConfigError(source, line_of("switch.n_max"), "switch.n_max",
                      fmt::format("must be >= 2 * switch.n_min = {}", 2 * sw.n_min));
  if (cfg.run.forced_switch && *cfg.run.forced_switch > cfg.run.iterations)
    throw ConfigError(source, line_of("switch.forced"), "switch.forced", "must not exceed iterations");

  if (cfg.env.ends_with(".json")) {
    std::filesystem::path p = cfg.env;
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    if (!std::filesystem::exists(p))
      throw ConfigError(source, line_of("env"), "env", fmt::format("file '{}' not found", p.string()));
    cfg.env = p.string();
  } else {
    try {
      make_zoo_mdp(cfg.env);
    } catch (const Error& e) {
      throw ConfigError(source, line_of("env"), "env", e.what());
    }
  }
  if (cfg.output_dir.is_relative() && !base_dir.empty()) cfg.output_dir = base_dir / cfg.output_dir;

  try {
    validate(cfg.run);
  } catch (const Error& e) {
    throw ConfigError(source, 0, "config", e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, "file", "cannot open config");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str(), path.string(), path.parent_path());
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) { return fmt::format("{:016x}", hash); }

}  // namespace lokilab
