#include <algorithm>

#include <fmt/format.h>

#include <Eigen/LU>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "omdt/error.hpp"
#include "omdt/omdt.hpp"

namespace omdt {

double big_m(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument(fmt::format("big_m: gamma {} outside (0, 1)", gamma));
  return 1.0 / (1.0 - gamma);
}

std::size_t OmdtLayout::expected_variables() const {
  return n_branches() * thresholds.total() + n_leaves() * n_actions + n_states * n_branches() +
         2 * n_states * n_actions;
}

std::size_t OmdtLayout::expected_constraints() const {
  return 2 * n_states + n_branches() + n_states * n_branches() + n_leaves() +
         n_states * n_actions * n_leaves() + n_states * n_actions;
}

OmdtModel build_omdt(const TabularMdp& mdp, const FeatureMatrix& features, std::size_t depth) {
  require_valid(mdp);
  if (depth < 1 || depth > 20) throw InvalidArgument(fmt::format("build_omdt: depth {} out of range", depth));
  if (features.n_rows != mdp.n_states)
    throw InvalidArgument("build_omdt: feature rows do not match the MDP states");

  OmdtModel out;
  OmdtLayout& L = out.layout;
  L.depth = depth;
  L.n_states = mdp.n_states;
  L.n_actions = mdp.n_actions;
  L.gamma = mdp.gamma;
  L.big_m = big_m(mdp.gamma);
  L.thresholds = candidate_thresholds(features);
  for (std::size_t j = 0; j < L.thresholds.n_features(); ++j)
    for (double k : L.thresholds.values[j]) L.split_choices.push_back({j, k});

  MilpModel& model = out.model;
  model.name = mdp.name.empty() ? "omdt" : mdp.name;
  model.sense = Sense::Maximize;
  const std::size_t S = mdp.n_states, A = mdp.n_actions, TD = L.n_branches(), TL = L.n_leaves();

  // Threshold index k counts within the feature.
  for (std::size_t m = 0; m < TD; ++m) {
    std::size_t choice = 0;
    for (std::size_t j = 0; j < L.thresholds.n_features(); ++j)
      for (std::size_t k = 0; k < L.thresholds.values[j].size(); ++k, ++choice)
        model.add_binary(fmt::format("b_m{}_f{}_t{}", m, j, k));
  }
  for (std::size_t t = 0; t < TL; ++t)
    for (std::size_t a = 0; a < A; ++a) model.add_binary(fmt::format("c_l{}_a{}", t, a));
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t m = 0; m < TD; ++m) model.add_binary(fmt::format("d_s{}_m{}", s, m));
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) model.add_binary(fmt::format("pi_s{}_a{}", s, a));
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      model.add_variable(fmt::format("x_s{}_a{}", s, a), VarKind::Continuous, 0.0, L.big_m,
                         mdp.expected_reward(s, a));

  // flow
  std::vector<std::vector<Term>> inflow(S);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (const auto& t : mdp.outcomes(s, a))
        if (t.prob != 0.0) inflow[t.next].push_back({L.x(s, a), -mdp.gamma * t.prob});
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<Term> terms = std::move(inflow[s]);
    for (std::size_t a = 0; a < A; ++a) terms.push_back({L.x(s, a), 1.0});
    model.add_constraint(fmt::format("flow_s{}", s), std::move(terms), Relation::Equal, mdp.p0[s]);
  }
  // onesplit
  for (std::size_t m = 0; m < TD; ++m) {
    std::vector<Term> terms;
    for (std::size_t q = 0; q < L.split_choices.size(); ++q) terms.push_back({L.b(m, q), 1.0});
    model.add_constraint(fmt::format("onesplit_m{}", m), std::move(terms), Relation::Equal, 1.0);
  }
  // dir
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t m = 0; m < TD; ++m) {
      std::vector<Term> terms{{L.d(s, m), 1.0}};
      for (std::size_t q = 0; q < L.split_choices.size(); ++q)
        if (side(s, L.split_choices[q].feature, L.split_choices[q].threshold, features))
          terms.push_back({L.b(m, q), -1.0});
      model.add_constraint(fmt::format("dir_s{}_m{}", s, m), std::move(terms), Relation::Equal, 0.0);
    }
  // oneact
  for (std::size_t t = 0; t < TL; ++t) {
    std::vector<Term> terms;
    for (std::size_t a = 0; a < A; ++a) terms.push_back({L.c(t, a), 1.0});
    model.add_constraint(fmt::format("oneact_l{}", t), std::move(terms), Relation::Equal, 1.0);
  }
  // leafimp: reaching leaf t and c_{t,a} imply π_{s,a}
  const DecisionTree shape = DecisionTree::constant(depth, 0);
  std::vector<std::vector<std::pair<std::size_t, int>>> paths(TL);
  for (std::size_t t = 0; t < TL; ++t) paths[t] = shape.ancestors(t);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t t = 0; t < TL; ++t) {
        std::vector<Term> terms;
        double n_right = 0.0;
        for (auto [m, dir] : paths[t]) {
          terms.push_back({L.d(s, m), dir ? 1.0 : -1.0});
          n_right += dir;
        }
        terms.push_back({L.c(t, a), 1.0});
        terms.push_back({L.pi(s, a), -1.0});
        model.add_constraint(fmt::format("leafimp_s{}_a{}_l{}", s, a, t), std::move(terms),
                             Relation::LessEqual, n_right);
      }
  // onepol
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<Term> terms;
    for (std::size_t a = 0; a < A; ++a) terms.push_back({L.pi(s, a), 1.0});
    model.add_constraint(fmt::format("onepol_s{}", s), std::move(terms), Relation::Equal, 1.0);
  }
  // gate
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      model.add_constraint(fmt::format("gate_s{}_a{}", s, a), {{L.x(s, a), 1.0}, {L.pi(s, a), -L.big_m}},
                           Relation::LessEqual, 0.0);
  return out;
}

std::vector<double> tree_assignment(const OmdtLayout& layout, const TabularMdp& mdp,
                                    const FeatureMatrix& features, const DecisionTree& tree) {
  if (tree.depth() != layout.depth) throw InvalidArgument("tree_assignment: depth mismatch");
  std::vector<double> v(layout.n_variables(), 0.0);
  for (std::size_t m = 0; m < layout.n_branches(); ++m) {
    const Split& sp = tree.splits()[m];
    std::size_t q = 0;
    while (q < layout.split_choices.size() && !(layout.split_choices[q] == sp)) ++q;
    if (q == layout.split_choices.size())
      throw InvalidArgument(fmt::format("tree_assignment: split at node {} is not a candidate", m));
    v[layout.b(m, q)] = 1.0;
    for (std::size_t s = 0; s < layout.n_states; ++s)
      v[layout.d(s, m)] = side(s, sp.feature, sp.threshold, features);
  }
  for (std::size_t t = 0; t < layout.n_leaves(); ++t) v[layout.c(t, tree.leaf_actions()[t])] = 1.0;
  const DeterministicPolicy policy = tree_to_policy(tree, features);

  // Occupancy: (I − γ P_π)ᵀ μ = p0, x_{s,π(s)} = μ_s.
  const std::size_t S = layout.n_states;
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t s = 0; s < S; ++s) {
    trip.emplace_back(s, s, 1.0);
    for (const auto& t : mdp.outcomes(s, policy.action_of[s]))
      trip.emplace_back(t.next, s, -mdp.gamma * t.prob);
  }
  Eigen::SparseMatrix<double> a(S, S);
  a.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(a);
  if (lu.info() != Eigen::Success) throw Error("tree_assignment: occupancy system is singular");
  Eigen::VectorXd p0 = Eigen::Map<const Eigen::VectorXd>(mdp.p0.data(), S);
  Eigen::VectorXd mu = lu.solve(p0);
  mu += lu.solve(p0 - a * mu);
  for (std::size_t s = 0; s < S; ++s) {
    v[layout.pi(s, policy.action_of[s])] = 1.0;
    v[layout.x(s, policy.action_of[s])] = std::clamp(mu(s), 0.0, layout.big_m);
  }
  return v;
}

}  // namespace omdt
