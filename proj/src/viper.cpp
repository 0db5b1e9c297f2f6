#include "omdt/viper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "omdt/error.hpp"
#include "omdt/rng.hpp"

namespace omdt {

void WeightedDataset::add(std::span<const double> features, std::size_t label, double weight) {
  if (features.size() != n_features) throw InvalidArgument("dataset: row width mismatch");
  if (!(weight >= 0.0) || !std::isfinite(weight)) throw InvalidArgument("dataset: weight must be finite and >= 0");
  x.insert(x.end(), features.begin(), features.end());
  labels.push_back(label);
  weights.push_back(weight);
}

double viper_weight(std::span<const double> q_row) {
  if (q_row.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(q_row.begin(), q_row.end());
  return *hi - *lo;
}

std::size_t GreedyTree::action(std::span<const double> x) const {
  std::size_t n = 0;
  while (!nodes[n].leaf) n = x[nodes[n].feature] > nodes[n].threshold ? nodes[n].right : nodes[n].left;
  return nodes[n].action;
}

std::size_t GreedyTree::decision_nodes() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return !n.leaf; }));
}

std::size_t GreedyTree::depth() const {
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  std::size_t d = 0;
  while (!stack.empty()) {
    auto [n, level] = stack.back();
    stack.pop_back();
    d = std::max(d, level);
    if (!nodes[n].leaf) {
      stack.emplace_back(nodes[n].left, level + 1);
      stack.emplace_back(nodes[n].right, level + 1);
    }
  }
  return d;
}

DecisionTree GreedyTree::to_complete(std::size_t depth) const {
  if (depth < std::max<std::size_t>(1, this->depth()))
    throw InvalidArgument(fmt::format("tree of depth {} does not fit in depth {}", this->depth(), depth));
  const std::size_t n_leaves = std::size_t{1} << depth;
  std::vector<Split> splits(n_leaves - 1);
  std::vector<std::size_t> actions(n_leaves);
  // filler split for padding below early leaves
  Split filler{0, 0.0};
  for (const auto& n : nodes)
    if (!n.leaf) {
      filler = {n.feature, n.threshold};
      break;
    }
  // (heap index, greedy node)
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [m, g] = stack.back();
    stack.pop_back();
    if (m >= n_leaves - 1) {
      actions[m - (n_leaves - 1)] = nodes[g].action;
      continue;
    }
    const Node& n = nodes[g];
    if (n.leaf) {
      splits[m] = filler;
      stack.emplace_back(2 * m + 1, g);
      stack.emplace_back(2 * m + 2, g);
    } else {
      splits[m] = {n.feature, n.threshold};
      stack.emplace_back(2 * m + 1, n.left);
      stack.emplace_back(2 * m + 2, n.right);
    }
  }
  return DecisionTree(depth, std::move(splits), std::move(actions));
}

namespace {

struct Row {
  std::span<const double> x;
  std::size_t label;
  double weight;
};

struct Totals {
  std::vector<double> w;
  double total = 0.0;
  explicit Totals(std::size_t k) : w(k, 0.0) {}
  void add(std::size_t label, double weight) {
    w[label] += weight;
    total += weight;
  }
  void remove(std::size_t label, double weight) {
    w[label] -= weight;
    total -= weight;
  }
  double gini() const {
    if (total <= 0.0) return 0.0;
    double sq = 0.0;
    for (double v : w) sq += v * v;
    return total - sq / total;
  }
};

class Grower {
 public:
  Grower(std::vector<Row> rows, std::size_t n_features, std::size_t n_actions, std::size_t max_depth)
      : rows_(std::move(rows)), n_features_(n_features), n_actions_(n_actions), max_depth_(max_depth) {}

  GreedyTree grow() {
    std::vector<std::size_t> idx(rows_.size());
    std::iota(idx.begin(), idx.end(), 0);
    tree_.nodes.emplace_back();
    build(0, idx, 0);
    return std::move(tree_);
  }

 private:
  bool pure(const std::vector<std::size_t>& idx) const {
    for (std::size_t i : idx)
      if (rows_[i].label != rows_[idx[0]].label) return false;
    return true;
  }

  std::size_t majority(const std::vector<std::size_t>& idx) const {
    std::vector<double> w(n_actions_, 0.0), count(n_actions_, 0.0);
    for (std::size_t i : idx) {
      w[rows_[i].label] += rows_[i].weight;
      count[rows_[i].label] += 1.0;
    }
    const auto& by = std::accumulate(w.begin(), w.end(), 0.0) > 0.0 ? w : count;
    return static_cast<std::size_t>(std::max_element(by.begin(), by.end()) - by.begin());
  }

  void build(std::size_t node, std::vector<std::size_t>& idx, std::size_t level) {
    tree_.nodes[node].action = idx.empty() ? 0 : majority(idx);
    if (idx.empty() || level >= max_depth_ || pure(idx)) return;
    Totals all(n_actions_);
    for (std::size_t i : idx) all.add(rows_[i].label, rows_[i].weight);
    if (all.total > 0.0 && all.gini() <= 1e-12 * all.total) return;

    double best = std::numeric_limits<double>::infinity();
    std::size_t best_f = 0;
    double best_k = 0.0;
    bool found = false;
    std::vector<std::size_t> order = idx;
    for (std::size_t f = 0; f < n_features_; ++f) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return rows_[a].x[f] < rows_[b].x[f]; });
      Totals left(n_actions_), right = all;
      // unit weights break ties when the node carries no weight
      const bool unit = all.total <= 0.0;
      if (unit) {
        right = Totals(n_actions_);
        for (std::size_t i : order) right.add(rows_[i].label, 1.0);
      }
      for (std::size_t p = 0; p + 1 < order.size(); ++p) {
        const Row& r = rows_[order[p]];
        const double w = unit ? 1.0 : r.weight;
        left.add(r.label, w);
        right.remove(r.label, w);
        const double k = r.x[f], next = rows_[order[p + 1]].x[f];
        if (next == k) continue;
        const double score = left.gini() + right.gini();
        if (!found || score < best - 1e-12 * std::max(1.0, std::abs(best))) {
          best = score;
          best_f = f;
          best_k = k;
          found = true;
        }
      }
    }
    if (!found) return;

    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx) (rows_[i].x[best_f] > best_k ? ri : li).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const std::size_t l = tree_.nodes.size();
    tree_.nodes.emplace_back();
    const std::size_t r = tree_.nodes.size();
    tree_.nodes.emplace_back();
    auto& n = tree_.nodes[node];
    n.leaf = false;
    n.feature = best_f;
    n.threshold = best_k;
    n.left = l;
    n.right = r;
    build(l, li, level + 1);
    build(r, ri, level + 1);
  }

  std::vector<Row> rows_;
  std::size_t n_features_, n_actions_, max_depth_;
  GreedyTree tree_;
};

// Identical (row, label) pairs are merged by summing weights.
std::vector<Row> merged_rows(const WeightedDataset& data) {
  std::map<std::pair<std::vector<double>, std::size_t>, std::size_t> seen;
  std::vector<Row> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = data.row(i);
    auto [it, inserted] = seen.try_emplace({std::vector<double>(r.begin(), r.end()), data.labels[i]}, rows.size());
    if (inserted) rows.push_back({r, data.labels[i], data.weights[i]});
    else rows[it->second].weight += data.weights[i];
  }
  return rows;
}

}  // namespace

DecisionTree fit_weighted_tree(const WeightedDataset& data, std::size_t max_depth, std::size_t n_actions) {
  if (data.size() == 0) throw InvalidArgument("fit_weighted_tree: empty dataset");
  if (max_depth < 1) throw InvalidArgument("fit_weighted_tree: depth must be at least 1");
  for (std::size_t l : data.labels)
    if (l >= n_actions) throw InvalidArgument("fit_weighted_tree: label out of range");
  Grower g(merged_rows(data), data.n_features, n_actions, max_depth);
  return g.grow().to_complete(max_depth);
}

ViperResult viper_train(const TabularMdp& mdp, const FeatureMatrix& features, const DeterministicPolicy& teacher,
                        const Eigen::MatrixXd& q, std::size_t depth, const ViperConfig& config) {
  if (teacher.action_of.size() != mdp.n_states || static_cast<std::size_t>(q.rows()) != mdp.n_states ||
      static_cast<std::size_t>(q.cols()) != mdp.n_actions || features.n_rows != mdp.n_states)
    throw InvalidArgument("viper_train: teacher, Q and features must match the MDP");
  if (config.iterations == 0) throw InvalidArgument("viper_train: at least one iteration is needed");
  std::vector<double> weight(mdp.n_states);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    const Eigen::VectorXd row = q.row(s);
    weight[s] = viper_weight({row.data(), static_cast<std::size_t>(row.size())});
  }

  ViperResult result;
  WeightedDataset data(features.n_cols);
  DeterministicPolicy rollout = teacher;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto sim = simulate(mdp, rollout, derive_seed(config.seed, it), config.episodes_per_iteration,
                              config.max_steps, true);
    for (const auto& trace : sim.traces)
      for (std::size_t s : trace) data.add(features.row(s), teacher.action_of[s], weight[s]);
    ViperIteration rec;
    rec.dataset_size = data.size();
    rec.candidate = fit_weighted_tree(data, depth, mdp.n_actions);
    rollout = tree_to_policy(rec.candidate, features);
    rec.exact_return = evaluate_policy_exact(mdp, rollout).expected_return;
    if (result.history.empty() || rec.exact_return > result.exact_return) {
      result.exact_return = rec.exact_return;
      result.tree = rec.candidate;
    }
    result.history.push_back(std::move(rec));
  }
  return result;
}

ExactTreeResult fit_exact_policy_tree(const FeatureMatrix& features, const DeterministicPolicy& teacher,
                                      std::size_t n_actions) {
  if (teacher.action_of.size() != features.n_rows) throw InvalidArgument("fit_exact_policy_tree: size mismatch");
  std::map<std::vector<double>, std::size_t> label_of;
  std::vector<Row> rows;
  for (std::size_t s = 0; s < features.n_rows; ++s) {
    const auto r = features.row(s);
    const std::size_t a = teacher.action_of[s];
    if (a >= n_actions) throw InvalidArgument("fit_exact_policy_tree: action out of range");
    auto [it, inserted] = label_of.try_emplace(std::vector<double>(r.begin(), r.end()), a);
    if (!inserted) {
      if (it->second != a)
        throw InvalidArgument(fmt::format("states with identical features need different actions (state {})", s));
      continue;
    }
    rows.push_back({r, a, 1.0});
  }
  Grower g(std::move(rows), features.n_cols, n_actions, std::numeric_limits<std::size_t>::max());
  ExactTreeResult out;
  out.tree = g.grow();
  out.decision_nodes = out.tree.decision_nodes();
  out.depth = out.tree.depth();
  return out;
}

}  // namespace omdt
