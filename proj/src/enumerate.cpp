#include <cmath>
#include <limits>
#include <unordered_map>

#include <Eigen/LU>
#include <fmt/format.h>

#include "omdt/rng.hpp"
#include "omdt/tree.hpp"

namespace omdt {

namespace {

constexpr double kTieTolerance = 1e-12;
constexpr std::size_t kDenseLimit = 512;

struct Key {
  std::uint64_t lo, hi;
  bool operator==(const Key&) const = default;
};
struct KeyHash {
  std::size_t operator()(const Key& k) const { return k.lo ^ (k.hi * 0x9e3779b97f4a7c15ULL); }
};

Key policy_key(const std::vector<std::size_t>& actions) {
  std::uint64_t lo = 0xcbf29ce484222325ULL, hi = 0x84222325cbf29ce4ULL;
  for (std::size_t a : actions) {
    lo = (lo ^ a) * 0x100000001b3ULL;
    hi = splitmix64(hi ^ a);
  }
  return {lo, hi};
}

// Return from p0 of a deterministic policy, restricted to the states the
// policy can reach.
class PolicyEvaluator {
 public:
  explicit PolicyEvaluator(const TabularMdp& mdp) : mdp_(mdp), local_(mdp.n_states, kNone) {}

  double operator()(const std::vector<std::size_t>& action_of) {
    reach_.clear();
    for (std::size_t s = 0; s < mdp_.n_states; ++s)
      if (mdp_.p0[s] > 0.0) visit(s);
    for (std::size_t i = 0; i < reach_.size(); ++i)
      for (const auto& t : mdp_.outcomes(reach_[i], action_of[reach_[i]]))
        if (t.prob > 0.0) visit(t.next);

    double result;
    const std::size_t n = reach_.size();
    if (n <= kDenseLimit) {
      Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
      Eigen::VectorXd r(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = reach_[i];
        double rbar = 0.0;
        for (const auto& t : mdp_.outcomes(s, action_of[s])) {
          a(i, local_[t.next]) -= mdp_.gamma * t.prob;
          rbar += t.prob * t.reward;
        }
        r(i) = rbar;
      }
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
      Eigen::VectorXd v = lu.solve(r);
      v += lu.solve(r - a * v);
      result = 0.0;
      for (std::size_t i = 0; i < n; ++i) result += mdp_.p0[reach_[i]] * v(i);
    } else {
      result = evaluate_policy_exact(mdp_, DeterministicPolicy{action_of}).expected_return;
    }
    for (std::size_t s : reach_) local_[s] = kNone;
    return result;
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  void visit(std::size_t s) {
    if (local_[s] != kNone) return;
    local_[s] = reach_.size();
    reach_.push_back(s);
  }

  const TabularMdp& mdp_;
  std::vector<std::size_t> local_;
  std::vector<std::size_t> reach_;
};

}  // namespace

EnumerationResult enumerate_trees(const TabularMdp& mdp, const FeatureMatrix& features,
                                  std::size_t depth, const ThresholdSet& thresholds, double budget) {
  require_valid(mdp);
  if (features.n_rows != mdp.n_states || thresholds.n_features() != features.n_cols)
    throw InvalidArgument("enumerate_trees: features and thresholds do not match the MDP");
  if (depth < 1) throw InvalidArgument("enumerate_trees: depth must be at least 1");

  std::vector<Split> choices;
  for (std::size_t j = 0; j < thresholds.n_features(); ++j)
    for (double k : thresholds.values[j]) choices.push_back({j, k});
  if (choices.empty()) throw InvalidArgument("enumerate_trees: no thresholds");

  const std::size_t n_leaves = std::size_t{1} << depth;
  const std::size_t n_branches = n_leaves - 1;
  const double space = std::pow(static_cast<double>(choices.size()), static_cast<double>(n_branches)) *
                       std::pow(static_cast<double>(mdp.n_actions), static_cast<double>(n_leaves));
  if (!(space <= budget))
    throw BudgetExceeded(fmt::format("enumerate_trees: {:.3g} candidates exceed the budget of {:.3g}",
                                     space, budget),
                         space);

  EnumerationResult best;
  best.space_size = space;
  best.expected_return = -std::numeric_limits<double>::infinity();
  PolicyEvaluator evaluate(mdp);
  std::unordered_map<Key, double, KeyHash> cache;

  std::vector<std::size_t> split_idx(n_branches, 0);
  std::vector<std::size_t> leaf_of(mdp.n_states);
  std::vector<std::size_t> occupied(n_leaves);
  std::vector<std::size_t> actions(n_leaves);
  std::vector<std::size_t> policy(mdp.n_states);

  for (;;) {
    std::vector<Split> splits(n_branches);
    for (std::size_t m = 0; m < n_branches; ++m) splits[m] = choices[split_idx[m]];
    DecisionTree shape(depth, splits, std::vector<std::size_t>(n_leaves, 0));
    std::fill(occupied.begin(), occupied.end(), 0);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      leaf_of[s] = shape.leaf_of(features.row(s));
      ++occupied[leaf_of[s]];
    }

    std::fill(actions.begin(), actions.end(), 0);
    for (;;) {
      // Empty leaves are canonicalized to action 0; other assignments on them
      // are duplicates that come later in the order.
      bool canonical = true;
      for (std::size_t t = 0; t < n_leaves; ++t)
        if (occupied[t] == 0 && actions[t] != 0) canonical = false;
      if (canonical) {
        for (std::size_t s = 0; s < mdp.n_states; ++s) policy[s] = actions[leaf_of[s]];
        const Key key = policy_key(policy);
        auto it = cache.find(key);
        double j;
        if (it != cache.end()) {
          j = it->second;
        } else {
          j = evaluate(policy);
          cache.emplace(key, j);
          ++best.evaluated;
        }
        if (best.tree.depth() == 0 ||
            j > best.expected_return + kTieTolerance * std::max(1.0, std::abs(best.expected_return))) {
          best.expected_return = j;
          best.tree = DecisionTree(depth, splits, actions);
        }
      }
      std::size_t pos = n_leaves;
      while (pos > 0 && ++actions[pos - 1] == mdp.n_actions) actions[--pos] = 0;
      if (pos == 0) break;
    }

    std::size_t pos = n_branches;
    while (pos > 0 && ++split_idx[pos - 1] == choices.size()) split_idx[--pos] = 0;
    if (pos == 0) break;
  }
  return best;
}

}  // namespace omdt
