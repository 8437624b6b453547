#include "lokilab/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>

#include <fmt/format.h>

#include "lokilab/error.hpp"
#include "lokilab/rng.hpp"

namespace lokilab {
namespace {

constexpr double kStochasticTol = 1e-12;

void check_distribution(const Eigen::Ref<const Eigen::VectorXd>& p,
                        const std::string& what) {
  if (!p.allFinite()) throw Error(ErrorCode::kInvalidArgument, what + " is not finite");
  if (p.minCoeff() < 0.0)
    throw Error(ErrorCode::kInvalidArgument, what + " has a negative entry");
  if (std::abs(p.sum() - 1.0) > kStochasticTol)
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("{} sums to {:.17g}, not 1", what, p.sum()));
}

}  // namespace

void validate(const TabularMdp& mdp) {
  if (mdp.num_states <= 0 || mdp.num_actions <= 0)
    throw Error(ErrorCode::kInvalidArgument, "MDP needs positive state and action counts");
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0))
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("gamma = {} is outside [0, 1)", mdp.gamma));
  const int rows = mdp.num_states * mdp.num_actions;
  if (mdp.transition.rows() != rows || mdp.transition.cols() != mdp.num_states)
    throw Error(ErrorCode::kDimensionMismatch, "transition table has the wrong shape");
  if (mdp.cost.rows() != mdp.num_states || mdp.cost.cols() != mdp.num_actions)
    throw Error(ErrorCode::kDimensionMismatch, "cost table has the wrong shape");
  if (mdp.initial_dist.size() != mdp.num_states)
    throw Error(ErrorCode::kDimensionMismatch, "initial distribution has the wrong size");
  if (!mdp.cost.allFinite()) throw Error(ErrorCode::kInvalidArgument, "cost is not finite");
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      check_distribution(mdp.transition.row(mdp.row(s, a)).transpose(),
                         fmt::format("transition row (s={}, a={})", s, a));
  check_distribution(mdp.initial_dist, "initial distribution");
}

TabularMdp make_chain2(double gamma) {
  TabularMdp m;
  m.num_states = 2;
  m.num_actions = 2;
  m.gamma = gamma;
  m.transition = Eigen::MatrixXd::Zero(4, 2);
  m.transition(m.row(0, 0), 0) = 1.0;
  m.transition(m.row(0, 1), 1) = 1.0;
  m.transition(m.row(1, 0), 1) = 1.0;
  m.transition(m.row(1, 1), 0) = 1.0;
  m.cost.resize(2, 2);
  m.cost << 1.0, 1.0, 0.0, 0.0;
  m.initial_dist = Eigen::Vector2d(1.0, 0.0);
  validate(m);
  return m;
}

TabularMdp make_cliff_gridworld(double gamma, double slip) {
  constexpr int kSide = 4;
  constexpr int kStart = 12;
  constexpr int kGoal = 15;
  constexpr double kCliffCost = 10.0;
  auto is_cliff = [](int s) { return s == 13 || s == 14; };
  // up, right, down, left
  constexpr int dr[4] = {-1, 0, 1, 0};
  constexpr int dc[4] = {0, 1, 0, -1};

  TabularMdp m;
  m.num_states = kSide * kSide;
  m.num_actions = 4;
  m.gamma = gamma;
  m.transition = Eigen::MatrixXd::Zero(m.num_states * 4, m.num_states);
  m.cost = Eigen::MatrixXd::Zero(m.num_states, 4);
  m.initial_dist = Eigen::VectorXd::Zero(m.num_states);
  m.initial_dist(kStart) = 1.0;

  auto move = [&](int s, int dir) {
    const int r = std::clamp(s / kSide + dr[dir], 0, kSide - 1);
    const int c = std::clamp(s % kSide + dc[dir], 0, kSide - 1);
    return r * kSide + c;
  };

  for (int s = 0; s < m.num_states; ++s) {
    for (int a = 0; a < 4; ++a) {
      if (s == kGoal) {
        m.transition(m.row(s, a), kGoal) = 1.0;
        continue;
      }
      const int dirs[3] = {a, (a + 1) % 4, (a + 3) % 4};
      const double probs[3] = {1.0 - slip, 0.5 * slip, 0.5 * slip};
      double cliff_mass = 0.0;
      for (int k = 0; k < 3; ++k) {
        int next = move(s, dirs[k]);
        if (is_cliff(next)) {
          cliff_mass += probs[k];
          next = kStart;
        }
        m.transition(m.row(s, a), next) += probs[k];
      }
      m.cost(s, a) = 1.0 + kCliffCost * cliff_mass;
    }
  }
  validate(m);
  return m;
}

TabularMdp make_random_mdp(std::uint64_t seed, int num_states, int num_actions,
                           double gamma) {
  if (num_states <= 0 || num_actions <= 0)
    throw Error(ErrorCode::kInvalidArgument, "random MDP needs positive sizes");
  CounterRng rng = CounterRng::stream(seed, {0x4D44505ULL});
  TabularMdp m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.gamma = gamma;
  m.transition.resize(num_states * num_actions, num_states);
  m.cost.resize(num_states, num_actions);
  auto dirichlet_row = [&](Eigen::Ref<Eigen::VectorXd> out) {
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      double u = rng.uniform();
      while (u <= 0.0) u = rng.uniform();
      out(i) = -std::log(u);
    }
    out /= out.sum();
  };
  for (int r = 0; r < num_states * num_actions; ++r) {
    Eigen::VectorXd row(num_states);
    dirichlet_row(row);
    m.transition.row(r) = row.transpose();
  }
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) m.cost(s, a) = rng.uniform();
  m.initial_dist.resize(num_states);
  dirichlet_row(m.initial_dist);
  validate(m);
  return m;
}

TabularMdp make_zoo_mdp(std::string_view name) {
  if (name == "chain2") return make_chain2();
  if (name == "gridworld-4x4") return make_cliff_gridworld();
  static const std::regex kRandom(R"(random\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\))");
  std::cmatch match;
  if (std::regex_match(name.begin(), name.end(), match, kRandom)) {
    return make_random_mdp(std::stoull(match[1].str()), std::stoi(match[2].str()),
                           std::stoi(match[3].str()));
  }
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown environment '{}'", name));
}

std::vector<std::string> zoo_names() {
  return {"chain2", "gridworld-4x4", "random(seed,S,A)"};
}

TabularMdp permute_states(const TabularMdp& mdp, const std::vector<int>& perm) {
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  if (static_cast<int>(perm.size()) != S)
    throw Error(ErrorCode::kDimensionMismatch, "permutation size differs from state count");
  TabularMdp out = mdp;
  for (int i = 0; i < S; ++i) {
    out.initial_dist(i) = mdp.initial_dist(perm[i]);
    for (int a = 0; a < A; ++a) {
      out.cost(i, a) = mdp.cost(perm[i], a);
      for (int j = 0; j < S; ++j)
        out.transition(out.row(i, a), j) = mdp.transition(mdp.row(perm[i], a), perm[j]);
    }
  }
  return out;
}

nlohmann::json to_json(const TabularMdp& mdp) {
  nlohmann::json j;
  j["num_states"] = mdp.num_states;
  j["num_actions"] = mdp.num_actions;
  j["gamma"] = mdp.gamma;
  std::vector<double> transition;
  transition.reserve(static_cast<std::size_t>(mdp.transition.size()));
  for (int r = 0; r < mdp.transition.rows(); ++r)
    for (int c = 0; c < mdp.transition.cols(); ++c) transition.push_back(mdp.transition(r, c));
  std::vector<double> cost;
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a) cost.push_back(mdp.cost(s, a));
  j["transition"] = transition;
  j["cost"] = cost;
  j["initial_dist"] = std::vector<double>(mdp.initial_dist.data(),
                                          mdp.initial_dist.data() + mdp.initial_dist.size());
  return j;
}

TabularMdp mdp_from_json(const nlohmann::json& j) {
  TabularMdp m;
  try {
    m.num_states = j.at("num_states").get<int>();
    m.num_actions = j.at("num_actions").get<int>();
    m.gamma = j.at("gamma").get<double>();
    const auto transition = j.at("transition").get<std::vector<double>>();
    const auto cost = j.at("cost").get<std::vector<double>>();
    const auto init = j.at("initial_dist").get<std::vector<double>>();
    const std::size_t S = static_cast<std::size_t>(m.num_states);
    const std::size_t A = static_cast<std::size_t>(m.num_actions);
    if (m.num_states <= 0 || m.num_actions <= 0 || transition.size() != S * A * S ||
        cost.size() != S * A || init.size() != S)
      throw Error(ErrorCode::kDimensionMismatch, "MDP arrays do not match num_states/num_actions");
    m.transition.resize(static_cast<Eigen::Index>(S * A), static_cast<Eigen::Index>(S));
    for (std::size_t r = 0; r < S * A; ++r)
      for (std::size_t c = 0; c < S; ++c)
        m.transition(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = transition[r * S + c];
    m.cost.resize(m.num_states, m.num_actions);
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t a = 0; a < A; ++a)
        m.cost(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = cost[s * A + a];
    m.initial_dist = Eigen::Map<const Eigen::VectorXd>(init.data(), m.num_states);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("malformed MDP: {}", e.what()));
  }
  validate(m);
  return m;
}

void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << to_json(mdp).dump(2) << '\n';
}

TabularMdp load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: {}", path.string(), e.what()));
  }
  return mdp_from_json(j);
}

}  // namespace lokilab
