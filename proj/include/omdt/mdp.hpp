#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "omdt/features.hpp"

namespace omdt {

/// One outcome of taking an action: next state, its probability and the
/// reward collected on that transition.
struct Transition {
  std::size_t next = 0;
  double prob = 0.0;
  double reward = 0.0;

  bool operator==(const Transition&) const = default;
};

/// Explicit tabular MDP with sparse transition rows.
///
/// Terminal states are represented as zero-reward self-loops so every
/// (state, action) row is a probability distribution.
struct TabularMdp {
  std::string name;
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  double gamma = 0.99;
  /// Row (s, a) lives at index s * n_actions + a.
  std::vector<std::vector<Transition>> rows;
  std::vector<double> p0;
  std::vector<std::string> state_labels;
  std::vector<std::string> action_labels;

  TabularMdp() = default;
  TabularMdp(std::size_t states, std::size_t actions, double discount);

  std::span<const Transition> outcomes(std::size_t s, std::size_t a) const {
    return rows[s * n_actions + a];
  }
  std::vector<Transition>& row(std::size_t s, std::size_t a) { return rows[s * n_actions + a]; }

  /// Appends an outcome, merging with an existing entry that has the same
  /// next state and reward.
  void add_transition(std::size_t s, std::size_t a, std::size_t next, double prob, double reward);

  /// Makes (s, a) a zero-reward self-loop for every action.
  void make_absorbing(std::size_t s);

  /// r̄(s, a) = Σ_{s'} P(s'|s,a) R(s,s',a).
  double expected_reward(std::size_t s, std::size_t a) const;

  /// True when every action is a zero-reward self-loop with probability one.
  bool is_absorbing(std::size_t s) const;

  bool operator==(const TabularMdp&) const = default;
};

struct DeterministicPolicy {
  std::vector<std::size_t> action_of;

  bool operator==(const DeterministicPolicy&) const = default;
};

struct StochasticPolicy {
  std::size_t n_actions = 0;
  /// Row-major state × action probabilities.
  std::vector<double> probs;

  double operator()(std::size_t s, std::size_t a) const { return probs[s * n_actions + a]; }

  static StochasticPolicy uniform(std::size_t n_states, std::size_t n_actions);
};

struct ValueFunction {
  std::vector<double> v;
  /// Sup-norm Bellman residual reached when the values were produced.
  double residual = 0.0;
};

enum class EvalMethod { Exact, MonteCarlo };

struct EvalReport {
  double expected_return = 0.0;
  EvalMethod method = EvalMethod::Exact;
  // Monte-Carlo only.
  std::optional<std::size_t> episodes;
  std::optional<double> std_error;
  std::optional<std::uint64_t> seed;
};

/// Lists every violated TabularMdp invariant; empty when the MDP is valid.
std::vector<std::string> validate(const TabularMdp& mdp);

/// Throws InvalidArgument carrying the first violations when validate() is non-empty.
void require_valid(const TabularMdp& mdp);

struct PruneResult {
  TabularMdp mdp;
  FeatureMatrix features;
  /// old state index -> new index, or nullopt when the state was dropped.
  std::vector<std::optional<std::size_t>> index_map;
};

/// Keeps only the states reachable from the support of p0 and re-indexes
/// them densely in ascending old-index order.
PruneResult prune_unreachable(const TabularMdp& mdp, const FeatureMatrix& features);

struct ValueIterationResult {
  ValueFunction values;
  DeterministicPolicy policy;
  std::size_t iterations = 0;
};

inline constexpr double kDefaultViTolerance = 1e-10;
inline constexpr std::size_t kDefaultViMaxIterations = 1'000'000;

/// Bellman optimality iteration until ‖V − T(V)‖∞ < tol. The returned policy
/// is greedy on V, ties broken toward the lowest action index.
ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = kDefaultViTolerance,
                                     std::size_t max_iter = kDefaultViMaxIterations);

/// Q(s,a) = Σ P(s'|s,a) (R + γ v(s')); rows are states.
Eigen::MatrixXd q_from_values(const TabularMdp& mdp, std::span<const double> v);

/// Greedy policy on a Q table, lowest action index on ties.
DeterministicPolicy greedy_policy(const Eigen::MatrixXd& q);

/// State values of a fixed policy (direct linear solve of the policy
/// Bellman equation, refined until the residual is below 1e-10).
std::vector<double> policy_values(const TabularMdp& mdp, const DeterministicPolicy& policy);
std::vector<double> policy_values(const TabularMdp& mdp, const StochasticPolicy& policy);

EvalReport evaluate_policy_exact(const TabularMdp& mdp, const DeterministicPolicy& policy);
EvalReport evaluate_policy_exact(const TabularMdp& mdp, const StochasticPolicy& policy);

struct SimulationResult {
  EvalReport report;
  /// Visited state sequence of each episode, starting state included.
  std::vector<std::vector<std::size_t>> traces;
  std::vector<double> returns;
};

inline constexpr std::size_t kDefaultMaxSteps = 1000;

/// Monte-Carlo rollouts. Episode i draws from the stream derive_seed(seed, i),
/// so results do not depend on scheduling. Episodes stop at max_steps or when
/// an absorbing state is reached.
SimulationResult simulate(const TabularMdp& mdp, const DeterministicPolicy& policy,
                          std::uint64_t seed, std::size_t episodes,
                          std::size_t max_steps = kDefaultMaxSteps, bool keep_traces = true);
SimulationResult simulate(const TabularMdp& mdp, const StochasticPolicy& policy,
                          std::uint64_t seed, std::size_t episodes,
                          std::size_t max_steps = kDefaultMaxSteps, bool keep_traces = true);

/// (j − j_rand) / (j_opt − j_rand); throws when the anchors coincide.
double normalized_return(double j, double j_rand, double j_opt);

/// Return of the uniform-random policy and of the unrestricted optimum.
struct ReturnAnchors {
  double j_rand = 0.0;
  double j_opt = 0.0;
};
ReturnAnchors compute_anchors(const TabularMdp& mdp);

}  // namespace omdt
