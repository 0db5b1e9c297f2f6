#pragma once

#include <cstddef>

#include "omdt/features.hpp"
#include "omdt/mdp.hpp"
#include "omdt/milp_model.hpp"
#include "omdt/tree.hpp"

namespace omdt {

/// Upper bound 1/(1−γ) on any occupancy x_{s,a}.
double big_m(double gamma);

/// Where each OMDT variable family lives in the model's column order:
/// b, c, d, π, x, each block row-major in the index order of its name.
struct OmdtLayout {
  std::size_t depth = 0;
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  double gamma = 0.0;
  double big_m = 0.0;
  ThresholdSet thresholds;
  /// Flattened (feature, threshold) choices in b-column order.
  std::vector<Split> split_choices;

  std::size_t n_branches() const { return (std::size_t{1} << depth) - 1; }
  std::size_t n_leaves() const { return std::size_t{1} << depth; }

  std::size_t b(std::size_t m, std::size_t choice) const { return m * split_choices.size() + choice; }
  std::size_t c(std::size_t t, std::size_t a) const { return c0() + t * n_actions + a; }
  std::size_t d(std::size_t s, std::size_t m) const { return d0() + s * n_branches() + m; }
  std::size_t pi(std::size_t s, std::size_t a) const { return pi0() + s * n_actions + a; }
  std::size_t x(std::size_t s, std::size_t a) const { return x0() + s * n_actions + a; }
  std::size_t n_variables() const { return x0() + n_states * n_actions; }

  /// Table-style size formulas.
  std::size_t expected_variables() const;
  std::size_t expected_constraints() const;

 private:
  std::size_t c0() const { return n_branches() * split_choices.size(); }
  std::size_t d0() const { return c0() + n_leaves() * n_actions; }
  std::size_t pi0() const { return d0() + n_states * n_branches(); }
  std::size_t x0() const { return pi0() + n_states * n_actions; }
};

struct OmdtModel {
  MilpModel model;
  OmdtLayout layout;
};

/// Optimal depth-D tree policy as a MILP over occupancies x_{s,a}.
OmdtModel build_omdt(const TabularMdp& mdp, const FeatureMatrix& features, std::size_t depth);

/// Assignment representing a given tree: the induced policy's occupancy
/// measure plus the matching b, c, d and π. Used for warm starts and tests.
std::vector<double> tree_assignment(const OmdtLayout& layout, const TabularMdp& mdp,
                                    const FeatureMatrix& features, const DecisionTree& tree);

}  // namespace omdt
