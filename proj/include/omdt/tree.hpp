#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omdt/error.hpp"
#include "omdt/features.hpp"
#include "omdt/mdp.hpp"

namespace omdt {

/// Candidate split values per feature, strictly increasing.
struct ThresholdSet {
  std::vector<std::vector<double>> values;

  std::size_t n_features() const { return values.size(); }
  /// Σ_j K_j.
  std::size_t total() const;
  bool operator==(const ThresholdSet&) const = default;
};

/// Unique values of each feature column, sorted ascending.
ThresholdSet candidate_thresholds(const FeatureMatrix& features);

/// 1 (right) iff X_sj > k.
inline int side(double value, double threshold) { return value > threshold ? 1 : 0; }
int side(std::size_t s, std::size_t j, double threshold, const FeatureMatrix& features);

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  bool operator==(const Split&) const = default;
};

/// Complete binary tree of fixed depth in heap order: node m has children
/// 2m+1 and 2m+2; leaf t sits below the branches, and the bits of t read
/// from the most significant one give the path (1 = right).
class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::size_t depth, std::vector<Split> splits, std::vector<std::size_t> leaf_actions);
  /// Every split on (0, threshold), every leaf the same action.
  static DecisionTree constant(std::size_t depth, std::size_t action, double threshold = 0.0);

  std::size_t depth() const { return depth_; }
  std::size_t n_branches() const { return splits_.size(); }
  std::size_t n_leaves() const { return leaves_.size(); }
  const std::vector<Split>& splits() const { return splits_; }
  const std::vector<std::size_t>& leaf_actions() const { return leaves_; }
  Split& split(std::size_t m) { return splits_.at(m); }
  std::size_t& leaf_action(std::size_t t) { return leaves_.at(t); }

  /// Leaf reached by an observation.
  std::size_t leaf_of(std::span<const double> x) const;
  std::size_t action(std::span<const double> x) const { return leaves_[leaf_of(x)]; }

  /// Branch nodes on the path to leaf t, root first, with the direction
  /// taken at each (0 left, 1 right).
  std::vector<std::pair<std::size_t, int>> ancestors(std::size_t t) const;

  bool operator==(const DecisionTree&) const = default;

 private:
  std::size_t depth_ = 0;
  std::vector<Split> splits_;
  std::vector<std::size_t> leaves_;
};

DeterministicPolicy tree_to_policy(const DecisionTree& tree, const FeatureMatrix& features);

/// The same policy one level deeper: each leaf becomes a branch with
/// `filler` as its split and two children copying the leaf's action.
DecisionTree deepened(const DecisionTree& tree, Split filler);

/// log10 of (Σ_j (K_j − 1))^{|T_D|} × |A|^{|T_L|}.
double count_tree_policies(const ThresholdSet& thresholds, std::size_t depth,
                           std::size_t n_actions);

/// Nested JSON records; features are named, leaves carry the action index
/// and label.
std::string serialize_tree(const DecisionTree& tree, std::span<const std::string> feature_names,
                           std::span<const std::string> action_labels = {});

/// Parses serialize_tree output. Feature names are resolved against
/// `feature_names`; leaf actions must be < n_actions. Throws ParseError.
DecisionTree deserialize_tree(std::string_view text, std::span<const std::string> feature_names,
                              std::size_t n_actions);

/// Graphviz rendering; branch edges are labelled "≤ k" and "> k".
std::string tree_to_dot(const DecisionTree& tree, std::span<const std::string> feature_names,
                        std::span<const std::string> action_labels = {});

// ---------------------------------------------------------------------------
// Brute-force oracle

inline constexpr double kDefaultEnumerationBudget = 1e7;

/// Search space larger than the budget.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, double space) : Error(what), space_(space) {}
  double space_size() const noexcept { return space_; }

 private:
  double space_;
};

struct EnumerationResult {
  DecisionTree tree;
  double expected_return = 0.0;
  double space_size = 0.0;
  /// Distinct policies actually evaluated.
  std::size_t evaluated = 0;
};

/// Evaluates every (split assignment, leaf-action assignment), degenerate
/// splits included, and returns the lexicographically first maximizer.
EnumerationResult enumerate_trees(const TabularMdp& mdp, const FeatureMatrix& features,
                                  std::size_t depth, const ThresholdSet& thresholds,
                                  double budget = kDefaultEnumerationBudget);

}  // namespace omdt
