#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "omdt/mdp.hpp"
#include "omdt/tree.hpp"

namespace omdt {

/// Rows of (observation, teacher action, weight ≥ 0).
struct WeightedDataset {
  std::size_t n_features = 0;
  std::vector<double> x;  // row-major
  std::vector<std::size_t> labels;
  std::vector<double> weights;

  explicit WeightedDataset(std::size_t features = 0) : n_features(features) {}
  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * n_features, n_features}; }
  void add(std::span<const double> features, std::size_t label, double weight);
};

/// max_a Q(s,a) − min_a Q(s,a).
double viper_weight(std::span<const double> q_row);

/// Binary tree of arbitrary shape produced by greedy induction.
struct GreedyTree {
  struct Node {
    bool leaf = true;
    std::size_t feature = 0;
    double threshold = 0.0;
    std::size_t left = 0, right = 0;
    std::size_t action = 0;
  };
  std::vector<Node> nodes;  // root at 0

  std::size_t action(std::span<const double> x) const;
  std::size_t decision_nodes() const;
  std::size_t depth() const;
  /// Complete tree of the given depth (≥ depth()) with the same policy.
  DecisionTree to_complete(std::size_t depth) const;
};

/// Top-down splits minimizing weighted Gini impurity over action labels,
/// x ≤ k to the left, weighted-majority leaves; padded to a complete tree
/// of depth max_depth.
DecisionTree fit_weighted_tree(const WeightedDataset& data, std::size_t max_depth, std::size_t n_actions);

struct ViperConfig {
  std::size_t iterations = 40;
  std::size_t episodes_per_iteration = 30;
  std::size_t max_steps = 200;
  std::uint64_t seed = 0;
};

struct ViperIteration {
  std::size_t dataset_size = 0;
  double exact_return = 0.0;
  DecisionTree candidate;
};

struct ViperResult {
  DecisionTree tree;
  double exact_return = 0.0;
  std::vector<ViperIteration> history;
};

/// Dataset aggregation: the first iteration rolls out the teacher, later
/// ones the latest student; every visited state is labelled with the
/// teacher's action and weighted by viper_weight. Returns the candidate with
/// the best exact return (earliest on ties).
ViperResult viper_train(const TabularMdp& mdp, const FeatureMatrix& features, const DeterministicPolicy& teacher,
                        const Eigen::MatrixXd& q, std::size_t depth, const ViperConfig& config = {});

struct ExactTreeResult {
  GreedyTree tree;
  std::size_t decision_nodes = 0;
  std::size_t depth = 0;
};

/// Grows greedy splits without a depth limit until every leaf agrees with
/// the teacher on all states. Throws InvalidArgument when two states share a
/// feature row but not an action.
ExactTreeResult fit_exact_policy_tree(const FeatureMatrix& features, const DeterministicPolicy& teacher,
                                      std::size_t n_actions);

}  // namespace omdt
