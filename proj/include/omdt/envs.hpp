#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "omdt/features.hpp"
#include "omdt/mdp.hpp"

namespace omdt {

/// Identifies one generated environment. `seed` only matters for the
/// randomized generators (3d_navigation, xor); `overrides` pins generator
/// parameters by name.
struct EnvSpec {
  std::string name;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> overrides;
};

struct Environment {
  TabularMdp mdp;
  FeatureMatrix features;
};

/// The thirteen environment identifiers.
const std::vector<std::string>& env_names();

/// Builds the environment and prunes states unreachable from p0. All
/// environments use γ = 0.99.
Environment build_env(const EnvSpec& spec);

inline constexpr double kEnvGamma = 0.99;

// ---------------------------------------------------------------------------
// Frozenlake

/// Action order follows the usual gym convention.
enum class Direction : int { Left = 0, Down = 1, Right = 2, Up = 3 };

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
  auto operator<=>(const Cell&) const = default;
};

using FrozenLakeMap = std::vector<std::string>;

/// "4x4", "8x8" or "12x12".
const FrozenLakeMap& frozenlake_map(std::string_view size);

/// Slippery move: the intended direction and the two perpendicular ones,
/// 1/3 each. Off-grid moves leave the agent in place; outcomes landing on the
/// same cell are merged. Throws on H and G tiles.
std::vector<std::pair<Cell, double>> frozenlake_step_distribution(Direction action, Cell cell,
                                                                  const FrozenLakeMap& map);

// ---------------------------------------------------------------------------
// System administrator

/// Probability that a machine that is not rebooted is on at the next step.
double sysadmin_on_probability(int status, double ratio_on_neighbors);

/// Undirected edge list used for a sysadmin topology.
using EdgeList = std::vector<std::pair<int, int>>;

/// Default topology of "sysadmin_1", "sysadmin_2" or "sysadmin_tree".
EdgeList sysadmin_default_edges(std::string_view name);

// ---------------------------------------------------------------------------
// XOR

/// +1 when (round(x) + round(y)) mod 2 equals the action, −1 otherwise.
double xor_reward(double x, double y, int action);

}  // namespace omdt
