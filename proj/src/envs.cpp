#include "omdt/envs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <functional>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "omdt/error.hpp"
#include "omdt/rng.hpp"

namespace omdt {

namespace {

using Overrides = std::map<std::string, std::string>;

void reject_unknown(const EnvSpec& spec, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : spec.overrides) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw InvalidArgument(fmt::format("{}: unknown override '{}'", spec.name, key));
  }
}

double override_double(const EnvSpec& spec, const std::string& key, double fallback) {
  const auto it = spec.overrides.find(key);
  if (it == spec.overrides.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0' || !std::isfinite(v))
    throw InvalidArgument(fmt::format("{}: override '{}' is not a number: '{}'", spec.name, key,
                                      it->second));
  return v;
}

int override_int(const EnvSpec& spec, const std::string& key, int fallback, int lo, int hi) {
  const double v = override_double(spec, key, fallback);
  if (v != std::floor(v) || v < lo || v > hi)
    throw InvalidArgument(
        fmt::format("{}: override '{}' must be an integer in [{}, {}]", spec.name, key, lo, hi));
  return static_cast<int>(v);
}

// ---------------------------------------------------------------------------
// frozenlake

const FrozenLakeMap kMap4{"SFFF", "FHFH", "FFFH", "HFFG"};
const FrozenLakeMap kMap8{"SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF",
                          "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG"};
const FrozenLakeMap kMap12{"SFFFFFFFFFFF", "FFFFFFFFFFFF", "FFFHFFFFFFFH", "FFFFFHFFFFFF",
                           "FFFHFFFFFFFF", "FHHFFFHFFHFF", "FHFFHFHFFFFF", "FFFHFFFFFFFF",
                           "FFFFFFFFHFFF", "HFFFFHFFFFHH", "FFFFFFGFFFFF", "FFFFFFFFFFFF"};

Cell move(Cell c, Direction d, int rows, int cols) {
  switch (d) {
    case Direction::Left: c.col = std::max(c.col - 1, 0); break;
    case Direction::Down: c.row = std::min(c.row + 1, rows - 1); break;
    case Direction::Right: c.col = std::min(c.col + 1, cols - 1); break;
    case Direction::Up: c.row = std::max(c.row - 1, 0); break;
  }
  return c;
}

Environment make_frozenlake(const EnvSpec& spec, std::string_view size) {
  reject_unknown(spec, {});
  const auto& map = frozenlake_map(size);
  const int rows = static_cast<int>(map.size());
  const int cols = static_cast<int>(map[0].size());
  TabularMdp mdp(rows * cols, 4, kEnvGamma);
  mdp.name = spec.name;
  mdp.action_labels = {"left", "down", "right", "up"};
  FeatureMatrix feats(rows * cols, {"row", "col"});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t s = r * cols + c;
      mdp.state_labels.push_back(fmt::format("({},{}){}", r, c, map[r][c]));
      feats(s, 0) = r;
      feats(s, 1) = c;
      const char tile = map[r][c];
      if (tile == 'S') mdp.p0[s] = 1.0;
      if (tile == 'H' || tile == 'G') {
        mdp.make_absorbing(s);
        continue;
      }
      for (int a = 0; a < 4; ++a) {
        for (const auto& [next, p] :
             frozenlake_step_distribution(static_cast<Direction>(a), {r, c}, map)) {
          const double reward = map[next.row][next.col] == 'G' ? 1.0 : 0.0;
          mdp.add_transition(s, a, next.row * cols + next.col, p, reward);
        }
      }
    }
  }
  return {std::move(mdp), std::move(feats)};
}

// ---------------------------------------------------------------------------
// 3d_navigation

Environment make_navigation3d(const EnvSpec& spec) {
  reject_unknown(spec, {});
  constexpr int n = 5;
  const auto index = [](int x, int y, int z) { return static_cast<std::size_t>((x * n + y) * n + z); };
  const std::size_t goal = index(n - 1, n - 1, n - 1);

  Rng rng(spec.seed);
  std::vector<double> disappear(n * n * n);
  for (auto& q : disappear) q = rng.uniform();

  TabularMdp mdp(n * n * n, 6, kEnvGamma);
  mdp.name = spec.name;
  mdp.action_labels = {"+x", "-x", "+y", "-y", "+z", "-z"};
  FeatureMatrix feats(n * n * n, {"x", "y", "z"});
  constexpr std::array<std::array<int, 3>, 6> deltas{
      {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      for (int z = 0; z < n; ++z) {
        const std::size_t s = index(x, y, z);
        feats(s, 0) = x;
        feats(s, 1) = y;
        feats(s, 2) = z;
        mdp.state_labels.push_back(fmt::format("({},{},{})", x, y, z));
        if (s == goal) {
          mdp.make_absorbing(s);
          continue;
        }
        for (int a = 0; a < 6; ++a) {
          const int nx = std::clamp(x + deltas[a][0], 0, n - 1);
          const int ny = std::clamp(y + deltas[a][1], 0, n - 1);
          const int nz = std::clamp(z + deltas[a][2], 0, n - 1);
          const std::size_t t = index(nx, ny, nz);
          if (t == goal) {
            mdp.add_transition(s, a, goal, 1.0, 1.0);
            continue;
          }
          // the vanished robot shares the goal's zero-reward absorbing state
          const double q = disappear[t];
          mdp.add_transition(s, a, t, 1.0 - q, 0.0);
          mdp.add_transition(s, a, goal, q, 0.0);
        }
      }
    }
  }
  mdp.p0[index(0, 0, 0)] = 1.0;
  return {std::move(mdp), std::move(feats)};
}

// ---------------------------------------------------------------------------
// blackjack

// Card values with aces counted as 11; tens include the face cards.
constexpr std::array<std::pair<int, double>, 10> kCards{{{2, 1.0 / 13},
                                                         {3, 1.0 / 13},
                                                         {4, 1.0 / 13},
                                                         {5, 1.0 / 13},
                                                         {6, 1.0 / 13},
                                                         {7, 1.0 / 13},
                                                         {8, 1.0 / 13},
                                                         {9, 1.0 / 13},
                                                         {10, 4.0 / 13},
                                                         {11, 1.0 / 13}}};

// Distribution of the dealer's final total starting from `total`; the dealer
// draws while the total is 17 or less.
void dealer_finals(int total, double prob, std::map<int, double>& out) {
  if (total > 17) {
    out[total] += prob;
    return;
  }
  for (const auto& [card, p] : kCards) dealer_finals(total + card, prob * p, out);
}

Environment make_blackjack(const EnvSpec& spec) {
  reject_unknown(spec, {});
  // States: start (0, 0, 0); playing (p, d, 0) with p in 2..20; finished
  // (p, d, 1) with p in 2..31. d is the dealer's face-up card.
  std::vector<std::array<int, 3>> states{{0, 0, 0}};
  for (int p = 2; p <= 20; ++p)
    for (int d = 2; d <= 11; ++d) states.push_back({p, d, 0});
  for (int p = 2; p <= 31; ++p)
    for (int d = 2; d <= 11; ++d) states.push_back({p, d, 1});
  std::map<std::array<int, 3>, std::size_t> index;
  for (std::size_t i = 0; i < states.size(); ++i) index[states[i]] = i;

  TabularMdp mdp(states.size(), 2, kEnvGamma);
  mdp.name = spec.name;
  mdp.action_labels = {"skip", "hit"};
  FeatureMatrix feats(states.size(), {"player_total", "dealer_card", "finished"});
  mdp.p0[0] = 1.0;

  std::map<int, std::map<int, double>> finals;
  for (int d = 2; d <= 11; ++d) dealer_finals(d, 1.0, finals[d]);

  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto [p, d, done] = states[i];
    feats(i, 0) = p;
    feats(i, 1) = d;
    feats(i, 2) = done;
    mdp.state_labels.push_back(fmt::format("p={},d={}{}", p, d, done ? ",done" : ""));
    if (done) {
      mdp.make_absorbing(i);
      continue;
    }
    if (p == 0) {
      for (int a = 0; a < 2; ++a)
        for (const auto& [pc, pp] : kCards)
          for (const auto& [dc, dp] : kCards) mdp.add_transition(i, a, index.at({pc, dc, 0}), pp * dp, 0.0);
      continue;
    }
    // skip: the dealer plays out and the game is scored
    const std::size_t stood = index.at({p, d, 1});
    double win = 0.0, tie = 0.0, loss = 0.0;
    for (const auto& [total, prob] : finals.at(d)) {
      if (total > 21 || p > total) win += prob;
      else if (p == total) tie += prob;
      else loss += prob;
    }
    if (win > 0) mdp.add_transition(i, 0, stood, win, 1.0);
    if (tie > 0) mdp.add_transition(i, 0, stood, tie, 0.0);
    if (loss > 0) mdp.add_transition(i, 0, stood, loss, -1.0);
    // hit
    for (const auto& [card, prob] : kCards) {
      const int np = p + card;
      if (np > 21) mdp.add_transition(i, 1, index.at({np, d, 1}), prob, -1.0);
      else if (np == 21) mdp.add_transition(i, 1, index.at({21, d, 1}), prob, 1.5);
      else mdp.add_transition(i, 1, index.at({np, d, 0}), prob, 0.0);
    }
  }
  return {std::move(mdp), std::move(feats)};
}

// ---------------------------------------------------------------------------
// inventory management

Environment make_inventory(const EnvSpec& spec) {
  reject_unknown(spec, {"capacity", "demand_rate"});
  const int cap = override_int(spec, "capacity", 100, 1, 1000);
  const double lambda = override_double(spec, "demand_rate", 15.0);
  if (!(lambda > 0.0)) throw InvalidArgument("inventory: demand_rate must be positive");
  constexpr double kFixedOrder = -10.0, kPerItem = -2.0, kHolding = -1.0, kSale = 4.0;

  // Poisson pmf up to cap; the tail is lumped into "demand >= stock" below.
  std::vector<double> pmf(cap + 1);
  pmf[0] = std::exp(-lambda);
  for (int k = 1; k <= cap; ++k) pmf[k] = pmf[k - 1] * lambda / k;

  const int n_states = cap + 1;
  TabularMdp mdp(n_states, cap, kEnvGamma);
  mdp.name = spec.name;
  FeatureMatrix feats(n_states, {"inventory"});
  for (int a = 0; a < cap; ++a) mdp.action_labels.push_back(fmt::format("buy {}", a));
  for (int x = 0; x < n_states; ++x) {
    feats(x, 0) = x;
    mdp.state_labels.push_back(fmt::format("stock {}", x));
    for (int a = 0; a < cap; ++a) {
      const int stock = std::min(x + a, cap);
      const double fixed = (a > 0 ? kFixedOrder : 0.0) + kPerItem * (stock - x) + kHolding * x;
      double below = 0.0;
      for (int d = 0; d < stock; ++d) {
        mdp.add_transition(x, a, stock - d, pmf[d], fixed + kSale * d);
        below += pmf[d];
      }
      mdp.add_transition(x, a, 0, 1.0 - below, fixed + kSale * stock);
    }
  }
  mdp.p0[0] = 1.0;
  return {std::move(mdp), std::move(feats)};
}

// ---------------------------------------------------------------------------
// system administrator

EdgeList parse_edges(const EnvSpec& spec, const std::string& text, int machines) {
  EdgeList edges;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(pos, comma - pos);
    const auto dash = item.find('-');
    int u = -1, v = -1;
    try {
      if (dash == std::string::npos) throw std::invalid_argument(item);
      std::size_t used = 0;
      u = std::stoi(item.substr(0, dash), &used);
      v = std::stoi(item.substr(dash + 1), &used);
    } catch (const std::exception&) {
      throw InvalidArgument(fmt::format("{}: malformed edge '{}'", spec.name, item));
    }
    if (u < 0 || v < 0 || u >= machines || v >= machines || u == v)
      throw InvalidArgument(fmt::format("{}: edge '{}' out of range", spec.name, item));
    edges.emplace_back(u, v);
    pos = comma + 1;
  }
  return edges;
}

Environment make_sysadmin(const EnvSpec& spec) {
  reject_unknown(spec, {"machines", "edges"});
  const int default_n = spec.name == "sysadmin_tree" ? 7 : 8;
  const int n = override_int(spec, "machines", default_n, 1, 12);
  EdgeList edges = spec.overrides.contains("edges")
                       ? parse_edges(spec, spec.overrides.at("edges"), n)
                       : sysadmin_default_edges(spec.name);
  if (!spec.overrides.contains("edges") && n != default_n)
    throw InvalidArgument(fmt::format("{}: overriding machines requires edges", spec.name));
  std::vector<std::vector<int>> neighbors(n);
  for (auto [u, v] : edges) {
    neighbors[u].push_back(v);
    neighbors[v].push_back(u);
  }
  constexpr double kRebootCost = -0.45;

  const std::size_t n_states = std::size_t{1} << n;
  TabularMdp mdp(n_states, n + 1, kEnvGamma);
  mdp.name = spec.name;
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) {
    names.push_back(fmt::format("machine_{}", i));
    mdp.action_labels.push_back(fmt::format("reboot {}", i));
  }
  mdp.action_labels.push_back("wait");
  FeatureMatrix feats(n_states, names);

  std::vector<double> on_prob(n);
  for (std::size_t s = 0; s < n_states; ++s) {
    int running = 0;
    std::string label;
    for (int i = 0; i < n; ++i) {
      const int status = (s >> i) & 1;
      feats(s, i) = status;
      running += status;
      label += status ? '1' : '0';
    }
    mdp.state_labels.push_back(label);
    for (int i = 0; i < n; ++i) {
      double ratio = 1.0;
      if (!neighbors[i].empty()) {
        int on = 0;
        for (int j : neighbors[i]) on += (s >> j) & 1;
        ratio = static_cast<double>(on) / static_cast<double>(neighbors[i].size());
      }
      on_prob[i] = sysadmin_on_probability((s >> i) & 1, ratio);
    }
    for (int a = 0; a <= n; ++a) {
      const double reward = running + (a < n ? kRebootCost : 0.0);
      for (std::size_t t = 0; t < n_states; ++t) {
        double p = 1.0;
        for (int i = 0; i < n && p > 0.0; ++i) {
          const double pi = (i == a) ? 1.0 : on_prob[i];
          p *= ((t >> i) & 1) ? pi : 1.0 - pi;
        }
        if (p > 0.0) mdp.add_transition(s, a, t, p, reward);
      }
    }
  }
  mdp.p0[n_states - 1] = 1.0;
  return {std::move(mdp), std::move(feats)};
}

// ---------------------------------------------------------------------------
// tictactoe_vs_random

using Board = std::array<std::uint8_t, 9>;

bool has_line(const Board& b, std::uint8_t who) {
  static constexpr int kLines[8][3] = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}, {0, 3, 6},
                                       {1, 4, 7}, {2, 5, 8}, {0, 4, 8}, {2, 4, 6}};
  for (const auto& l : kLines)
    if (b[l[0]] == who && b[l[1]] == who && b[l[2]] == who) return true;
  return false;
}

bool full(const Board& b) { return std::find(b.begin(), b.end(), 0) == b.end(); }

Environment make_tictactoe(const EnvSpec& spec) {
  reject_unknown(spec, {"draw_reward"});
  const double draw = override_double(spec, "draw_reward", 0.0);
  constexpr double kWin = 1.0, kLoss = -1.0;

  // Breadth-first over boards where the agent (X = 1) is to move; every
  // finished game goes to one shared absorbing state.
  std::vector<Board> boards{Board{}};
  std::map<Board, std::size_t> index{{Board{}, 0}};
  struct Out {
    std::size_t state;  // SIZE_MAX marks the terminal state
    double prob, reward;
  };
  constexpr std::size_t kTerminal = SIZE_MAX;
  std::vector<std::array<std::vector<Out>, 9>> moves;
  for (std::size_t i = 0; i < boards.size(); ++i) {
    const Board b = boards[i];
    std::array<std::vector<Out>, 9> row;
    for (int a = 0; a < 9; ++a) {
      if (b[a] != 0) {
        row[a].push_back({kTerminal, 1.0, kLoss});  // occupied square forfeits the game
        continue;
      }
      Board nb = b;
      nb[a] = 1;
      if (has_line(nb, 1)) {
        row[a].push_back({kTerminal, 1.0, kWin});
        continue;
      }
      if (full(nb)) {
        row[a].push_back({kTerminal, 1.0, draw});
        continue;
      }
      const auto empty = static_cast<double>(std::count(nb.begin(), nb.end(), 0));
      for (int o = 0; o < 9; ++o) {
        if (nb[o] != 0) continue;
        Board ob = nb;
        ob[o] = 2;
        if (has_line(ob, 2)) {
          row[a].push_back({kTerminal, 1.0 / empty, kLoss});
        } else if (full(ob)) {
          row[a].push_back({kTerminal, 1.0 / empty, draw});
        } else {
          auto [it, inserted] = index.try_emplace(ob, boards.size());
          if (inserted) boards.push_back(ob);
          row[a].push_back({it->second, 1.0 / empty, 0.0});
        }
      }
    }
    moves.push_back(std::move(row));
  }

  const std::size_t terminal = boards.size();
  TabularMdp mdp(boards.size() + 1, 9, kEnvGamma);
  mdp.name = spec.name;
  std::vector<std::string> names;
  for (int q = 0; q < 9; ++q) {
    names.push_back(fmt::format("square_{}", q));
    mdp.action_labels.push_back(fmt::format("mark {}", q));
  }
  FeatureMatrix feats(boards.size() + 1, names);
  for (std::size_t i = 0; i < boards.size(); ++i) {
    std::string label;
    for (int q = 0; q < 9; ++q) {
      feats(i, q) = boards[i][q];
      label += ".XO"[boards[i][q]];
    }
    mdp.state_labels.push_back(label);
    for (int a = 0; a < 9; ++a)
      for (const auto& o : moves[i][a])
        mdp.add_transition(i, a, o.state == kTerminal ? terminal : o.state, o.prob, o.reward);
  }
  mdp.state_labels.push_back("game over");
  mdp.make_absorbing(terminal);
  mdp.p0[0] = 1.0;
  return {std::move(mdp), std::move(feats)};
}

// ---------------------------------------------------------------------------
// tiger_vs_antelope

Environment make_tiger(const EnvSpec& spec) {
  reject_unknown(spec, {"step_cost"});
  const double step_cost = override_double(spec, "step_cost", -0.01);
  constexpr int n = 5;
  constexpr double kCatch = 1.0;
  const auto index = [](int tx, int ty, int ax, int ay) {
    return static_cast<std::size_t>(((tx * n + ty) * n + ax) * n + ay);
  };
  const std::size_t caught = n * n * n * n;
  constexpr double kSentinel = -1.0;

  TabularMdp mdp(caught + 1, 5, kEnvGamma);
  mdp.name = spec.name;
  mdp.action_labels = {"up", "down", "left", "right", "wait"};
  FeatureMatrix feats(caught + 1, {"tiger_x", "tiger_y", "antelope_x", "antelope_y"});
  constexpr std::array<std::array<int, 2>, 5> deltas{{{0, -1}, {0, 1}, {-1, 0}, {1, 0}, {0, 0}}};
  const auto cheb = [](int x0, int y0, int x1, int y1) {
    return std::max(std::abs(x0 - x1), std::abs(y0 - y1));
  };

  for (int tx = 0; tx < n; ++tx)
    for (int ty = 0; ty < n; ++ty)
      for (int ax = 0; ax < n; ++ax)
        for (int ay = 0; ay < n; ++ay) {
          const std::size_t s = index(tx, ty, ax, ay);
          feats(s, 0) = tx;
          feats(s, 1) = ty;
          feats(s, 2) = ax;
          feats(s, 3) = ay;
          mdp.state_labels.push_back(fmt::format("T({},{}) A({},{})", tx, ty, ax, ay));
          mdp.p0[s] = 1.0 / static_cast<double>(caught);
          for (int a = 0; a < 5; ++a) {
            if (tx == ax && ty == ay) {
              mdp.add_transition(s, a, caught, 1.0, kCatch);
              continue;
            }
            const int nx = std::clamp(tx + deltas[a][0], 0, n - 1);
            const int ny = std::clamp(ty + deltas[a][1], 0, n - 1);
            if (nx == ax && ny == ay) {
              mdp.add_transition(s, a, caught, 1.0, kCatch);
              continue;
            }
            // antelope jumps to a neighbouring cell strictly farther from the tiger
            const int dist = cheb(nx, ny, ax, ay);
            std::vector<std::pair<int, int>> jumps;
            for (int dx = -1; dx <= 1; ++dx)
              for (int dy = -1; dy <= 1; ++dy) {
                const int jx = ax + dx, jy = ay + dy;
                if ((dx || dy) && jx >= 0 && jx < n && jy >= 0 && jy < n &&
                    cheb(nx, ny, jx, jy) > dist)
                  jumps.emplace_back(jx, jy);
              }
            if (jumps.empty()) jumps.emplace_back(ax, ay);
            for (auto [jx, jy] : jumps)
              mdp.add_transition(s, a, index(nx, ny, jx, jy), 1.0 / jumps.size(), step_cost);
          }
        }
  for (std::size_t j = 0; j < 4; ++j) feats(caught, j) = kSentinel;
  mdp.state_labels.push_back("caught");
  mdp.make_absorbing(caught);
  return {std::move(mdp), std::move(feats)};
}

// ---------------------------------------------------------------------------
// traffic_intersection

Environment make_traffic(const EnvSpec& spec) {
  reject_unknown(spec, {});
  constexpr int kCap = 5, kMaxWait = 5;
  constexpr double kArriveA = 0.1, kArriveB = 0.5;
  constexpr double kPass = 1.0, kFlip = -2.0, kWaitUnit = -0.1;
  const auto index = [](int ca, int cb, int w, int light) {
    return static_cast<std::size_t>(((ca * (kCap + 1) + cb) * (kMaxWait + 1) + w) * 2 + light);
  };
  const std::size_t n_states = (kCap + 1) * (kCap + 1) * (kMaxWait + 1) * 2;
  TabularMdp mdp(n_states, 2, kEnvGamma);
  mdp.name = spec.name;
  mdp.action_labels = {"keep", "flip"};
  FeatureMatrix feats(n_states, {"cars_A", "cars_B", "wait_time", "light"});

  for (int ca = 0; ca <= kCap; ++ca)
    for (int cb = 0; cb <= kCap; ++cb)
      for (int w = 0; w <= kMaxWait; ++w)
        for (int light = 0; light < 2; ++light) {
          const std::size_t s = index(ca, cb, w, light);
          feats(s, 0) = ca;
          feats(s, 1) = cb;
          feats(s, 2) = w;
          feats(s, 3) = light;
          mdp.state_labels.push_back(
              fmt::format("A={} B={} wait={} green={}", ca, cb, w, light ? 'B' : 'A'));
          for (int a = 0; a < 2; ++a) {
            // light 0: side A has green
            int na = ca, nb = cb, nw, nl = light;
            double reward = 0.0;
            if (a == 1) {
              nl = 1 - light;
              nw = 1;
              reward += kFlip;
            } else {
              nw = std::min(w + 1, kMaxWait);
              int& green = light == 0 ? na : nb;
              if (green > 0) {
                --green;
                reward += kPass;
              }
            }
            const int red = nl == 0 ? nb : na;
            reward += kWaitUnit * std::pow(2.0, nw) * red;
            for (int arr_a = 0; arr_a < 2; ++arr_a)
              for (int arr_b = 0; arr_b < 2; ++arr_b) {
                const double p = (arr_a ? kArriveA : 1.0 - kArriveA) * (arr_b ? kArriveB : 1.0 - kArriveB);
                mdp.add_transition(s, a, index(std::min(na + arr_a, kCap), std::min(nb + arr_b, kCap), nw, nl),
                                   p, reward);
              }
          }
        }
  mdp.p0[index(0, 0, 0, 0)] = 1.0;
  return {std::move(mdp), std::move(feats)};
}

// ---------------------------------------------------------------------------
// xor

Environment make_xor(const EnvSpec& spec) {
  reject_unknown(spec, {"points"});
  const int n = override_int(spec, "points", 200, 1, 100000);
  Rng rng(spec.seed);
  TabularMdp mdp(n, 2, kEnvGamma);
  mdp.name = spec.name;
  mdp.action_labels = {"0", "1"};
  FeatureMatrix feats(n, {"x", "y"});
  for (int i = 0; i < n; ++i) {
    feats(i, 0) = rng.uniform();
    feats(i, 1) = rng.uniform();
  }
  const double p = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    mdp.state_labels.push_back(fmt::format("point {}", i));
    mdp.p0[i] = p;
    for (int a = 0; a < 2; ++a) {
      const double r = xor_reward(feats(i, 0), feats(i, 1), a);
      auto& row = mdp.row(i, a);
      row.reserve(n);
      for (int t = 0; t < n; ++t) row.push_back({static_cast<std::size_t>(t), p, r});
    }
  }
  return {std::move(mdp), std::move(feats)};
}

}  // namespace

const std::vector<std::string>& env_names() {
  static const std::vector<std::string> names{
      "3d_navigation",  "blackjack",    "frozenlake_4x4",    "frozenlake_8x8",
      "frozenlake_12x12", "inventory",  "sysadmin_1",        "sysadmin_2",
      "sysadmin_tree",  "tictactoe_vs_random", "tiger_vs_antelope", "traffic_intersection",
      "xor"};
  return names;
}

const FrozenLakeMap& frozenlake_map(std::string_view size) {
  if (size == "4x4") return kMap4;
  if (size == "8x8") return kMap8;
  if (size == "12x12") return kMap12;
  throw InvalidArgument(fmt::format("unknown frozenlake map '{}'", size));
}

std::vector<std::pair<Cell, double>> frozenlake_step_distribution(Direction action, Cell cell,
                                                                  const FrozenLakeMap& map) {
  const int rows = static_cast<int>(map.size());
  const int cols = static_cast<int>(map.at(0).size());
  if (cell.row < 0 || cell.row >= rows || cell.col < 0 || cell.col >= cols)
    throw InvalidArgument("frozenlake: cell outside the map");
  const char tile = map[cell.row][cell.col];
  if (tile == 'H' || tile == 'G')
    throw InvalidArgument(fmt::format("frozenlake: ({},{}) is a terminal tile", cell.row, cell.col));
  const int a = static_cast<int>(action);
  std::vector<std::pair<Cell, double>> out;
  for (int d : {(a + 3) % 4, a, (a + 1) % 4}) {
    const Cell next = move(cell, static_cast<Direction>(d), rows, cols);
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == next; });
    if (it != out.end()) it->second += 1.0 / 3.0;
    else out.emplace_back(next, 1.0 / 3.0);
  }
  return out;
}

double sysadmin_on_probability(int status, double ratio_on_neighbors) {
  if ((status != 0 && status != 1) || ratio_on_neighbors < 0.0 || ratio_on_neighbors > 1.0)
    throw InvalidArgument("sysadmin_on_probability: inputs out of range");
  return ratio_on_neighbors * (0.05 + 0.9 * status);
}

EdgeList sysadmin_default_edges(std::string_view name) {
  if (name == "sysadmin_tree") return {{0, 1}, {0, 2}, {1, 3}, {1, 4}, {2, 5}, {2, 6}};
  if (name == "sysadmin_1")
    return {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 0}, {0, 4}, {2, 6}};
  if (name == "sysadmin_2")
    return {{0, 1}, {0, 2}, {0, 3}, {1, 4}, {2, 5}, {3, 6}, {4, 7}, {5, 7}, {6, 7}, {1, 2}};
  throw InvalidArgument(fmt::format("no sysadmin topology named '{}'", name));
}

double xor_reward(double x, double y, int action) {
  const int label = (static_cast<int>(std::round(x)) + static_cast<int>(std::round(y))) % 2;
  return label == action ? 1.0 : -1.0;
}

Environment build_env(const EnvSpec& spec) {
  Environment raw;
  const std::string& n = spec.name;
  if (n == "frozenlake_4x4") raw = make_frozenlake(spec, "4x4");
  else if (n == "frozenlake_8x8") raw = make_frozenlake(spec, "8x8");
  else if (n == "frozenlake_12x12") raw = make_frozenlake(spec, "12x12");
  else if (n == "3d_navigation") raw = make_navigation3d(spec);
  else if (n == "blackjack") raw = make_blackjack(spec);
  else if (n == "inventory") raw = make_inventory(spec);
  else if (n == "sysadmin_1" || n == "sysadmin_2" || n == "sysadmin_tree") raw = make_sysadmin(spec);
  else if (n == "tictactoe_vs_random") raw = make_tictactoe(spec);
  else if (n == "tiger_vs_antelope") raw = make_tiger(spec);
  else if (n == "traffic_intersection") raw = make_traffic(spec);
  else if (n == "xor") raw = make_xor(spec);
  else throw InvalidArgument(fmt::format("unknown environment '{}'", n));
  require_valid(raw.mdp);
  auto pruned = prune_unreachable(raw.mdp, raw.features);
  return {std::move(pruned.mdp), std::move(pruned.features)};
}

}  // namespace omdt
