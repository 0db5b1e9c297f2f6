#include "omdt/tree.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "omdt/error.hpp"

namespace omdt {

using nlohmann::json;

std::size_t ThresholdSet::total() const {
  std::size_t n = 0;
  for (const auto& v : values) n += v.size();
  return n;
}

ThresholdSet candidate_thresholds(const FeatureMatrix& features) {
  if (features.n_rows == 0 || features.n_cols == 0)
    throw InvalidArgument("candidate_thresholds: empty feature matrix");
  ThresholdSet out;
  out.values.resize(features.n_cols);
  for (std::size_t j = 0; j < features.n_cols; ++j) {
    std::set<double> unique;
    for (std::size_t s = 0; s < features.n_rows; ++s) unique.insert(features(s, j));
    out.values[j].assign(unique.begin(), unique.end());
  }
  return out;
}

int side(std::size_t s, std::size_t j, double threshold, const FeatureMatrix& features) {
  return side(features(s, j), threshold);
}

DecisionTree::DecisionTree(std::size_t depth, std::vector<Split> splits,
                           std::vector<std::size_t> leaf_actions)
    : depth_(depth), splits_(std::move(splits)), leaves_(std::move(leaf_actions)) {
  if (depth < 1 || depth > 30) throw InvalidArgument(fmt::format("tree depth {} out of range", depth));
  const std::size_t leaves = std::size_t{1} << depth;
  if (splits_.size() != leaves - 1 || leaves_.size() != leaves)
    throw InvalidArgument(fmt::format("depth-{} tree needs {} splits and {} leaves, got {} and {}",
                                      depth, leaves - 1, leaves, splits_.size(), leaves_.size()));
}

DecisionTree DecisionTree::constant(std::size_t depth, std::size_t action, double threshold) {
  const std::size_t leaves = std::size_t{1} << depth;
  return DecisionTree(depth, std::vector<Split>(leaves - 1, Split{0, threshold}),
                      std::vector<std::size_t>(leaves, action));
}

std::size_t DecisionTree::leaf_of(std::span<const double> x) const {
  std::size_t m = 0;
  for (std::size_t level = 0; level < depth_; ++level) {
    const Split& sp = splits_[m];
    m = 2 * m + 1 + side(x[sp.feature], sp.threshold);
  }
  return m - splits_.size();
}

std::vector<std::pair<std::size_t, int>> DecisionTree::ancestors(std::size_t t) const {
  std::vector<std::pair<std::size_t, int>> path;
  std::size_t m = 0;
  for (std::size_t level = 0; level < depth_; ++level) {
    const int bit = static_cast<int>((t >> (depth_ - 1 - level)) & 1);
    path.emplace_back(m, bit);
    m = 2 * m + 1 + bit;
  }
  return path;
}

DeterministicPolicy tree_to_policy(const DecisionTree& tree, const FeatureMatrix& features) {
  for (const auto& sp : tree.splits())
    if (sp.feature >= features.n_cols)
      throw InvalidArgument(fmt::format("tree uses feature {} but only {} exist", sp.feature,
                                        features.n_cols));
  DeterministicPolicy p;
  p.action_of.resize(features.n_rows);
  for (std::size_t s = 0; s < features.n_rows; ++s) p.action_of[s] = tree.action(features.row(s));
  return p;
}

DecisionTree deepened(const DecisionTree& tree, Split filler) {
  std::vector<Split> splits = tree.splits();
  splits.resize(2 * tree.n_leaves() - 1, filler);
  std::vector<std::size_t> leaves;
  leaves.reserve(2 * tree.n_leaves());
  for (std::size_t a : tree.leaf_actions()) {
    leaves.push_back(a);
    leaves.push_back(a);
  }
  return DecisionTree(tree.depth() + 1, std::move(splits), std::move(leaves));
}

double count_tree_policies(const ThresholdSet& thresholds, std::size_t depth, std::size_t n_actions) {
  double splits = 0.0;
  for (const auto& v : thresholds.values) splits += static_cast<double>(v.size()) - 1.0;
  const double branches = std::ldexp(1.0, static_cast<int>(depth)) - 1.0;
  const double leaves = branches + 1.0;
  const double log_splits = splits > 0 ? std::log10(splits) : -std::numeric_limits<double>::infinity();
  const double log_actions = std::log10(static_cast<double>(n_actions));
  return branches * log_splits + leaves * log_actions;
}

// ---------------------------------------------------------------------------
// text formats

namespace {

std::string action_name(std::span<const std::string> labels, std::size_t a) {
  return a < labels.size() ? labels[a] : fmt::format("{}", a);
}

json node_json(const DecisionTree& tree, std::size_t m, std::span<const std::string> names,
               std::span<const std::string> labels) {
  if (m >= tree.n_branches()) {
    const std::size_t a = tree.leaf_actions()[m - tree.n_branches()];
    return {{"action", a}, {"label", action_name(labels, a)}};
  }
  const Split& sp = tree.splits()[m];
  if (sp.feature >= names.size())
    throw InvalidArgument(fmt::format("feature {} has no name", sp.feature));
  return {{"feature", names[sp.feature]},
          {"threshold", sp.threshold},
          {"left", node_json(tree, 2 * m + 1, names, labels)},
          {"right", node_json(tree, 2 * m + 2, names, labels)}};
}

}  // namespace

std::string serialize_tree(const DecisionTree& tree, std::span<const std::string> feature_names,
                           std::span<const std::string> action_labels) {
  json doc{{"format", "omdt-tree/1"},
           {"depth", tree.depth()},
           {"root", node_json(tree, 0, feature_names, action_labels)}};
  return doc.dump(2) + "\n";
}

DecisionTree deserialize_tree(std::string_view text, std::span<const std::string> feature_names,
                              std::size_t n_actions) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("tree: {}", e.what()));
  }
  try {
    if (doc.at("format") != "omdt-tree/1") throw ParseError("tree: unsupported format");
    const std::size_t depth = doc.at("depth").get<std::size_t>();
    if (depth < 1 || depth > 30) throw ParseError(fmt::format("tree: depth {} out of range", depth));
    const std::size_t leaves = std::size_t{1} << depth;
    std::vector<Split> splits(leaves - 1);
    std::vector<std::size_t> actions(leaves);

    // Walk the nested records in heap order.
    std::vector<std::pair<const json*, std::size_t>> stack{{&doc.at("root"), 0}};
    while (!stack.empty()) {
      auto [node, m] = stack.back();
      stack.pop_back();
      if (m < leaves - 1) {
        if (!node->contains("feature"))
          throw ParseError(fmt::format("tree: node {} should be a branch at depth {}", m, depth));
        const auto name = node->at("feature").get<std::string>();
        const auto it = std::find(feature_names.begin(), feature_names.end(), name);
        if (it == feature_names.end()) throw ParseError(fmt::format("tree: unknown feature '{}'", name));
        splits[m] = {static_cast<std::size_t>(it - feature_names.begin()),
                     node->at("threshold").get<double>()};
        stack.emplace_back(&node->at("right"), 2 * m + 2);
        stack.emplace_back(&node->at("left"), 2 * m + 1);
      } else {
        if (!node->contains("action"))
          throw ParseError(fmt::format("tree: node {} should be a leaf", m));
        const auto a = node->at("action").get<std::int64_t>();
        if (a < 0 || static_cast<std::size_t>(a) >= n_actions)
          throw ParseError(fmt::format("tree: leaf action {} out of range (n_actions = {})", a, n_actions));
        actions[m - (leaves - 1)] = static_cast<std::size_t>(a);
      }
    }
    return DecisionTree(depth, std::move(splits), std::move(actions));
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("tree: {}", e.what()));
  }
}

std::string tree_to_dot(const DecisionTree& tree, std::span<const std::string> feature_names,
                        std::span<const std::string> action_labels) {
  std::string out = "digraph tree {\n  node [fontname=\"Helvetica\"];\n";
  const std::size_t total = tree.n_branches() + tree.n_leaves();
  for (std::size_t m = 0; m < total; ++m) {
    if (m < tree.n_branches()) {
      const Split& sp = tree.splits()[m];
      const std::string name =
          sp.feature < feature_names.size() ? feature_names[sp.feature] : fmt::format("x{}", sp.feature);
      out += fmt::format("  n{} [shape=ellipse, label=\"{}\"];\n", m, name);
      out += fmt::format("  n{} -> n{} [label=\"≤ {:g}\"];\n", m, 2 * m + 1, sp.threshold);
      out += fmt::format("  n{} -> n{} [label=\"> {:g}\"];\n", m, 2 * m + 2, sp.threshold);
    } else {
      const std::size_t a = tree.leaf_actions()[m - tree.n_branches()];
      out += fmt::format("  n{} [shape=box, label=\"{}\"];\n", m, action_name(action_labels, a));
    }
  }
  out += "}\n";
  return out;
}

}  // namespace omdt
