#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lokilab/config.hpp"
#include "lokilab/experiment.hpp"

using namespace lokilab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lokilab_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

ConfigError config_error(const std::string& text) {
  try {
    parse_experiment_config(text, "t.cfg");
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a config error");
  return ConfigError("", 0, "", "");
}

int run_cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = "cd '" + dir.string() + "' && '" LOKILAB_CLI_PATH "' " + args + " > cli.out 2> cli.err";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kBaseConfig =
    "env = chain2\n"
    "algorithms = loki, pg, daggered, aggrevated, slols, thor\n"
    "iterations = 12\n"
    "batch_size = 5\n"
    "switch.n_min = 3\n"
    "switch.n_max = 6\n"
    "seeds = 1-25\n"
    "output_dir = out\n";

}  // namespace

TEST_CASE("key-value parsing") {
  const auto kv = parse_key_values("# header\n a = 1 \n\nb.c=two words # trailing\n", "x");
  REQUIRE(kv.size() == 2u);
  CHECK(kv.at("a").value == "1");
  CHECK(kv.at("a").line == 2);
  CHECK(kv.at("b.c").value == "two words");
  CHECK(kv.at("b.c").line == 4);
  try {
    parse_key_values("a = 1\nb = 2\na = 3\n", "x");
    FAIL("duplicate accepted");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 3);
    CHECK(e.key() == "a");
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_key_values("just words\n", "x"), ConfigError);
}

TEST_CASE("experiment configuration") {
  SUBCASE("defaults and overrides") {
    const auto cfg = parse_experiment_config(kBaseConfig, "t.cfg", "/base");
    CHECK(cfg.algorithms.size() == 6u);
    CHECK(cfg.seeds.size() == 25u);
    CHECK(cfg.seeds.front() == 1u);
    CHECK(cfg.run.iterations == 12);
    CHECK(cfg.run.switch_dist.n_min == 3);
    CHECK(cfg.output_dir == fs::path("/base/out"));
    CHECK(cfg.expert_temperature == 1.5);
  }
  SUBCASE("seed lists") {
    const auto cfg = parse_experiment_config("algorithms = pg\nseeds = 4, 9-11, 2\n", "t.cfg");
    CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 9, 10, 11, 2});
    CHECK(config_error("algorithms = pg\nseeds = 3, 3\n").key() == "seeds");
    CHECK(config_error("algorithms = pg\nseeds = 5-2\n").key() == "seeds");
    CHECK(config_error("algorithms = pg\nseeds = x\n").key() == "seeds");
  }
  SUBCASE("errors name the line and key") {
    const ConfigError e = config_error("algorithms = pg\nseeds = 1\noracle.adv.kind = nope\n");
    CHECK(e.line() == 3);
    CHECK(e.key() == "oracle.adv.kind");
    CHECK(std::string(e.what()).rfind("t.cfg:3: oracle.adv.kind:", 0) == 0);
    CHECK(config_error("algorithms = pg\nseeds = 1\nwhat = 1\n").key() == "what");
    CHECK(config_error("algorithms = pg\nseeds = 1\niterations = 0\n").key() == "iterations");
    CHECK(config_error("algorithms = pg\nseeds = 1\niterations = ten\n").key() == "iterations");
    CHECK(config_error("algorithms = pg\nseeds = 1\nbregman.kind = neg-entropy\n").key() == "bregman.kind");
    CHECK(config_error("algorithms = pg, pg\nseeds = 1\n").key() == "algorithms");
    CHECK(config_error("algorithms = pg\nseeds = 1\nenv = nowhere\n").key() == "env");
    CHECK(config_error("algorithms = pg\nseeds = 1\nenv = missing.json\n").key() == "env");
    CHECK(config_error("seeds = 1\n").key() == "algorithms");
    CHECK(config_error("algorithms = pg\n").key() == "seeds");
  }
  SUBCASE("switch range needs room unless forced") {
    const ConfigError e = config_error("algorithms = loki\nseeds = 1\nswitch.n_min = 5\nswitch.n_max = 8\n");
    CHECK(e.key().rfind("switch.", 0) == 0);
    CHECK_NOTHROW(parse_experiment_config(
        "algorithms = loki\nseeds = 1\nswitch.n_min = 5\nswitch.n_max = 8\nswitch.forced = 4\n", "t.cfg"));
    CHECK(config_error("algorithms = loki\nseeds = 1\niterations = 5\nswitch.forced = 6\n").key() == "switch.forced");
  }
  SUBCASE("oracle.kind selects a single algorithm and conflicts with algorithms") {
    const auto cfg = parse_experiment_config("oracle.kind = thor\noracle.horizon_H = 4\nseeds = 1\n", "t.cfg");
    CHECK(cfg.algorithms == std::vector<Algorithm>{Algorithm::kThor});
    CHECK(cfg.run.thor_H == 4);
    const ConfigError e = config_error("algorithms = pg\noracle.kind = thor\nseeds = 1\n");
    CHECK(e.key() == "oracle.kind");
    CHECK(e.line() == 2);
  }
  SUBCASE("hash ignores layout and tracks values") {
    const auto a = parse_experiment_config("algorithms = pg\nseeds = 1-3\n", "t.cfg");
    const auto b = parse_experiment_config("# c\nseeds   =   1-3\n\nalgorithms=pg   # x\n", "t.cfg");
    const auto c = parse_experiment_config("algorithms = pg\nseeds = 1-4\n", "t.cfg");
    CHECK(a.hash == b.hash);
    CHECK(a.hash != c.hash);
    CHECK(hash_hex(a.hash).size() == 16u);
  }
  SUBCASE("hash primitive") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
    CHECK(hash_hex(0xabcull) == "0000000000000abc");
  }
  SUBCASE("every documented key is accepted") {
    const auto keys = config_keys();
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    CHECK(std::find(keys.begin(), keys.end(), "oracle.adv.lambda") != keys.end());
    CHECK(std::find(keys.begin(), keys.end(), "trust_region.kl") != keys.end());
  }
}

TEST_CASE("summaries") {
  const auto s = summarize("pg", {{1.0, 2.0}, {3.0, 2.0}, {5.0, 2.0}}, "h");
  CHECK(s.num_seeds == 3);
  CHECK(s.iteration == std::vector<int>{1, 2});
  CHECK(s.mean_J[0] == 3.0);
  CHECK(s.std_J[0] == 2.0);  // sample standard deviation
  CHECK(s.std_J[1] == 0.0);
  const auto one = summarize("pg", {{1.0, 4.0}}, "h");
  CHECK(one.std_J == std::vector<double>{0.0, 0.0});
  CHECK_THROWS(summarize("pg", {{1.0}, {1.0, 2.0}}, "h"));
}

TEST_CASE("experiment runner") {
  TempDir dir("runner");
  const auto cfg = parse_experiment_config(kBaseConfig, "t.cfg", dir.path);
  const auto result = run_experiment(cfg);
  CHECK(result.run_files.size() == 150u);
  REQUIRE(result.summary_files.size() == 6u);

  SUBCASE("run files carry every iteration and a final line") {
    std::ifstream in(run_file(cfg, Algorithm::kLoki, 3));
    std::string line;
    std::vector<nlohmann::json> rows;
    while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
    REQUIRE(rows.size() == 13u);
    for (int i = 0; i < 12; ++i) {
      CHECK(rows[i]["iter"] == i + 1);
      CHECK(rows[i]["seed"] == 3);
      CHECK(rows[i]["algorithm"] == "loki");
      CHECK(rows[i]["config_hash"] == hash_hex(cfg.hash));
      for (const char* key : {"phase", "J_exact", "J_mc", "grad_norm", "kl_moved", "eta", "expert_queries", "K"})
        CHECK(rows[i].contains(key));
    }
    CHECK(rows[12]["phase"] == "final");
  }
  SUBCASE("summary CSV equals the statistics of the run files") {
    for (const auto& alg : cfg.algorithms) {
      std::vector<std::vector<double>> series;
      for (auto seed : cfg.seeds) series.push_back(read_run_series(run_file(cfg, alg, seed)));
      const auto expected = summarize(to_string(alg), series, hash_hex(cfg.hash));
      const auto parsed = summary_from_csv(summary_file(cfg, alg));
      CHECK(parsed.algorithm == expected.algorithm);
      CHECK(parsed.num_seeds == 25);
      CHECK(parsed.config_hash == expected.config_hash);
      CHECK(parsed.iteration == expected.iteration);
      CHECK(parsed.mean_J == expected.mean_J);
      CHECK(parsed.std_J == expected.std_J);
    }
    CHECK(slurp(summary_file(cfg, Algorithm::kPg)).rfind("algorithm,iteration,mean_J,std_J,num_seeds,config_hash\n", 0) == 0);
  }
  SUBCASE("reruns are byte-identical") {
    std::vector<std::string> before;
    for (const auto& f : result.summary_files) before.push_back(slurp(f));
    const std::string run_before = slurp(result.run_files[17]);
    run_experiment(cfg);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(slurp(result.summary_files[i]) == before[i]);
    CHECK(slurp(result.run_files[17]) == run_before);
    for (const auto& entry : fs::directory_iterator(cfg.output_dir)) CHECK(entry.path().extension() != ".tmp");
  }
  SUBCASE("plot data") {
    const std::string table = plotdata(result.summary_files);
    std::istringstream in(table);
    std::string line;
    std::getline(in, line);
    CHECK(line == "algorithm,iteration,mean_J,half_std");
    int rows = 0;
    std::string prev;
    while (std::getline(in, line)) {
      ++rows;
      const std::string alg = line.substr(0, line.find(','));
      CHECK(alg >= prev);
      prev = alg;
    }
    CHECK(rows == 6 * 12);
    CHECK_THROWS(plotdata({result.summary_files[0], result.summary_files[0]}));
  }
  SUBCASE("plot data rejects mismatched lengths") {
    auto other = cfg;
    other.run.iterations = 8;
    other.algorithms = {Algorithm::kPg};
    other.output_dir = dir.path / "short";
    const auto r2 = run_experiment(other);
    try {
      plotdata({result.summary_files[0], r2.summary_files[0]});
      FAIL("mismatch accepted");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("short") != std::string::npos);
    }
  }
}

TEST_CASE("reward reporting negates costs") {
  TempDir dir("reward");
  auto cfg = parse_experiment_config("algorithms = pg\nseeds = 2\niterations = 3\n", "t.cfg", dir.path);
  auto costs = read_run_series(run_experiment(cfg).run_files[0]);
  cfg.report_as_reward = true;
  cfg.output_dir = dir.path / "reward";
  auto rewards = read_run_series(run_experiment(cfg).run_files[0]);
  REQUIRE(costs.size() == rewards.size());
  for (std::size_t i = 0; i < costs.size(); ++i) CHECK(rewards[i] == -costs[i]);
}

TEST_CASE("worker cap from the environment") {
  ::unsetenv("LOKI_LAB_THREADS");
  CHECK_FALSE(thread_cap_from_env().has_value());
  ::setenv("LOKI_LAB_THREADS", "3", 1);
  CHECK(thread_cap_from_env() == 3);
  ::setenv("LOKI_LAB_THREADS", "0", 1);
  CHECK_THROWS(thread_cap_from_env());
  ::setenv("LOKI_LAB_THREADS", "two", 1);
  CHECK_THROWS(thread_cap_from_env());
  ::unsetenv("LOKI_LAB_THREADS");
}

TEST_CASE("command-line tool") {
  TempDir dir("cli");
  spit(dir.path / "exp.cfg", kBaseConfig);
  spit(dir.path / "bad.cfg", "algorithms = pg\nseeds = 1\noracle.kind = foo\n");

  CHECK(run_cli("run exp.cfg", dir.path) == 0);
  CHECK(fs::exists(dir.path / "out" / "summary_loki.csv"));
  const std::string first = slurp(dir.path / "out" / "summary_thor.csv");
  CHECK(run_cli("run exp.cfg", dir.path) == 0);
  CHECK(slurp(dir.path / "out" / "summary_thor.csv") == first);

  CHECK(run_cli("run bad.cfg", dir.path) == 2);
  CHECK(slurp(dir.path / "cli.err").find("bad.cfg:3: oracle.kind:") != std::string::npos);
  CHECK(run_cli("run missing.cfg", dir.path) == 2);
  CHECK(std::system(("cd '" + dir.path.string() + "' && LOKI_LAB_THREADS=zero '" LOKILAB_CLI_PATH
                     "' run exp.cfg > /dev/null 2>&1")
                        .c_str()) != 0);

  CHECK(run_cli("verify switch", dir.path) == 0);
  {
    const auto j = nlohmann::json::parse(slurp(dir.path / "cli.out"));
    CHECK(j["name"] == "switch.law");
    CHECK(j["pass"] == true);
  }
  CHECK(run_cli("verify cnm.bound --terms", dir.path) == 0);
  CHECK(nlohmann::json::parse(slurp(dir.path / "cli.out")).contains("terms"));
  CHECK(run_cli("verify nonsense", dir.path) == 2);

  CHECK(run_cli("plotdata out/summary_pg.csv out/summary_loki.csv -o plot.csv", dir.path) == 0);
  CHECK(slurp(dir.path / "plot.csv").rfind("algorithm,iteration,mean_J,half_std\n", 0) == 0);
  CHECK(run_cli("plotdata out/summary_pg.csv out/none.csv", dir.path) == 2);

  CHECK(run_cli("zoo list", dir.path) == 0);
  CHECK(slurp(dir.path / "cli.out").find("gridworld-4x4") != std::string::npos);
  CHECK(run_cli("", dir.path) == 2);
  CHECK(run_cli("--help", dir.path) == 0);
}
