#include <cmath>
#include <regex>
#include <set>

#include <doctest.h>

#include "omdt/envs.hpp"
#include "omdt/error.hpp"
#include "omdt/rng.hpp"
#include "omdt/tree.hpp"
#include "support.hpp"

using namespace omdt;

namespace {

DecisionTree random_tree(std::size_t depth, const ThresholdSet& th, std::size_t n_actions, Rng& rng) {
  std::vector<Split> splits((std::size_t{1} << depth) - 1);
  for (auto& s : splits) {
    s.feature = rng.below(th.n_features());
    s.threshold = th.values[s.feature][rng.below(th.values[s.feature].size())];
  }
  std::vector<std::size_t> leaves(std::size_t{1} << depth);
  for (auto& a : leaves) a = rng.below(n_actions);
  return {depth, splits, leaves};
}

/// Leaf reached by walking the tree explicitly.
std::size_t walk(const DecisionTree& tree, std::span<const double> x) {
  std::size_t m = 0;
  while (m < tree.n_branches()) {
    const auto& s = tree.splits()[m];
    m = 2 * m + 1 + static_cast<std::size_t>(x[s.feature] > s.threshold);
  }
  return m - tree.n_branches();
}

}  // namespace

TEST_SUITE("thresholds") {
  TEST_CASE("frozenlake_4x4 has four values per coordinate") {
    const auto env = build_env({"frozenlake_4x4"});
    const auto th = candidate_thresholds(env.features);
    REQUIRE(th.n_features() == 2);
    CHECK(th.values[0] == std::vector<double>{0, 1, 2, 3});
    CHECK(th.values[1] == std::vector<double>{0, 1, 2, 3});
    CHECK(th.total() == 8);
  }

  TEST_CASE("constant column yields a single threshold") {
    FeatureMatrix f(3, {"k"});
    for (std::size_t s = 0; s < 3; ++s) f(s, 0) = 2.5;
    CHECK(candidate_thresholds(f).values[0] == std::vector<double>{2.5});
  }

  TEST_CASE("xor has 400 thresholds") {
    CHECK(candidate_thresholds(build_env({"xor"}).features).total() == 400);
  }
}

TEST_SUITE("side") {
  TEST_CASE("strictly greater goes right") {
    CHECK(side(0.0, 0.0) == 0);
    CHECK(side(1.0, 0.0) == 1);
  }

  TEST_CASE("the largest value sends everything left") {
    const auto env = build_env({"frozenlake_8x8"});
    for (std::size_t s = 0; s < env.mdp.n_states; ++s) CHECK(side(s, 0, 7.0, env.features) == 0);
  }
}

TEST_SUITE("DecisionTree") {
  TEST_CASE("shape is validated") {
    CHECK_THROWS_AS(DecisionTree(0, {}, {0}), InvalidArgument);
    CHECK_THROWS_AS(DecisionTree(1, {{0, 0.0}}, {0}), InvalidArgument);
    CHECK_NOTHROW(DecisionTree(1, {{0, 0.0}}, {0, 1}));
  }

  TEST_CASE("ancestors of each leaf follow its bits") {
    const auto t = DecisionTree::constant(3, 0);
    using P = std::vector<std::pair<std::size_t, int>>;
    CHECK(t.ancestors(0) == P{{0, 0}, {1, 0}, {3, 0}});
    CHECK(t.ancestors(5) == P{{0, 1}, {2, 0}, {5, 1}});
    CHECK(t.ancestors(7) == P{{0, 1}, {2, 1}, {6, 1}});
  }

  TEST_CASE("constant leaves give a constant policy") {
    const auto env = build_env({"frozenlake_8x8"});
    const auto p = tree_to_policy(DecisionTree::constant(2, 3, 1.0), env.features);
    for (auto a : p.action_of) CHECK(a == 3);
  }

  TEST_CASE("depth-1 split on col > 1 sends col 0 and 1 left") {
    const auto env = build_env({"frozenlake_4x4"});
    const DecisionTree t(1, {{1, 1.0}}, {0, 2});
    const auto p = tree_to_policy(t, env.features);
    for (std::size_t s = 0; s < env.mdp.n_states; ++s)
      CHECK(p.action_of[s] == (env.features(s, 1) <= 1.0 ? 0u : 2u));
  }

  TEST_CASE("routing partitions the states") {
    Rng rng(2);
    const auto env = build_env({"3d_navigation"});
    const auto th = candidate_thresholds(env.features);
    for (int rep = 0; rep < 50; ++rep) {
      const auto t = random_tree(1 + rep % 4, th, env.mdp.n_actions, rng);
      std::vector<std::size_t> count(t.n_leaves(), 0);
      for (std::size_t s = 0; s < env.mdp.n_states; ++s) {
        const auto leaf = t.leaf_of(env.features.row(s));
        REQUIRE(leaf < t.n_leaves());
        CHECK(leaf == walk(t, env.features.row(s)));
        ++count[leaf];
      }
      std::size_t total = 0;
      for (auto c : count) total += c;
      CHECK(total == env.mdp.n_states);
    }
  }

  TEST_CASE("deepening keeps the policy") {
    Rng rng(4);
    const auto env = build_env({"sysadmin_tree"});
    const auto th = candidate_thresholds(env.features);
    for (int rep = 0; rep < 20; ++rep) {
      const auto t = random_tree(1 + rep % 3, th, env.mdp.n_actions, rng);
      const auto deeper = deepened(t, {rng.below(7), 0.0});
      CHECK(deeper.depth() == t.depth() + 1);
      CHECK(tree_to_policy(deeper, env.features) == tree_to_policy(t, env.features));
    }
  }
}

TEST_SUITE("count_tree_policies") {
  TEST_CASE("magnitudes") {
    const auto fl = candidate_thresholds(build_env({"frozenlake_4x4"}).features);
    CHECK(count_tree_policies(fl, 3, 4) == doctest::Approx(7 * std::log10(6.0) + 8 * std::log10(4.0)));
    CHECK(std::floor(count_tree_policies(fl, 3, 4)) == 10);
    const auto inv = candidate_thresholds(build_env({"inventory"}).features);
    CHECK(std::floor(count_tree_policies(inv, 3, 100)) == 30);
    const auto x = candidate_thresholds(build_env({"xor"}).features);
    CHECK(std::floor(count_tree_policies(x, 3, 2)) == 20);
    CHECK(count_tree_policies(x, 3, 2) == doctest::Approx(7 * std::log10(398.0) + 8 * std::log10(2.0)));
  }
}

TEST_SUITE("serialization") {
  const std::vector<std::string> names{"row", "col"};
  const std::vector<std::string> labels{"left", "down", "right", "up"};

  TEST_CASE("depth-3 round trip") {
    Rng rng(8);
    const auto env = build_env({"frozenlake_4x4"});
    const auto th = candidate_thresholds(env.features);
    for (int rep = 0; rep < 20; ++rep) {
      const auto t = random_tree(3, th, 4, rng);
      CHECK(deserialize_tree(serialize_tree(t, names, labels), names, 4) == t);
    }
  }

  TEST_CASE("fractional thresholds survive") {
    const DecisionTree t(1, {{1, 0.1 + 0.2}}, {1, 0});
    CHECK(deserialize_tree(serialize_tree(t, names), names, 2) == t);
  }

  TEST_CASE("leaf action out of range is rejected") {
    const DecisionTree t(1, {{0, 1.0}}, {0, 3});
    CHECK_THROWS_AS(deserialize_tree(serialize_tree(t, names, labels), names, 3), ParseError);
  }

  TEST_CASE("unknown feature and malformed text are rejected") {
    const DecisionTree t(1, {{0, 1.0}}, {0, 1});
    const std::vector<std::string> other{"x", "y"};
    CHECK_THROWS_AS(deserialize_tree(serialize_tree(t, names), other, 4), ParseError);
    CHECK_THROWS_AS(deserialize_tree("{\"depth\":", names, 4), ParseError);
  }

  TEST_CASE("DOT of a depth-1 tree has three nodes and two edges") {
    const DecisionTree t(1, {{1, 1.0}}, {0, 2});
    const std::string dot = tree_to_dot(t, names, labels);
    const std::regex node(R"(shape=)"), edge(R"(->)");
    auto count = [&](const std::regex& re) {
      return std::distance(std::sregex_iterator(dot.begin(), dot.end(), re), std::sregex_iterator());
    };
    CHECK(count(node) == 3);
    CHECK(count(edge) == 2);
    CHECK(dot.find("col") != std::string::npos);
    CHECK(dot.find("right") != std::string::npos);
    CHECK(dot.find("> 1") != std::string::npos);
  }
}

TEST_SUITE("enumerate_trees") {
  TEST_CASE("single-action MDP returns the unique policy value") {
    const auto m = omdt::testing::self_loop(0.5);
    const auto f = omdt::testing::single_feature(1);
    const auto r = enumerate_trees(m, f, 2, candidate_thresholds(f));
    CHECK(r.expected_return == doctest::Approx(50.0));
  }

  TEST_CASE("frozenlake_4x4 depth 1 and 2") {
    const auto env = build_env({"frozenlake_4x4"});
    const auto th = candidate_thresholds(env.features);
    const auto anchors = compute_anchors(env.mdp);
    const auto d1 = enumerate_trees(env.mdp, env.features, 1, th);
    CHECK(normalized_return(d1.expected_return, anchors.j_rand, anchors.j_opt) == doctest::Approx(0.19).epsilon(0.01 / 0.19));
    CHECK(d1.space_size == doctest::Approx(8.0 * 16.0));
    const auto d2 = enumerate_trees(env.mdp, env.features, 2, th);
    CHECK(d2.expected_return == doctest::Approx(0.37).epsilon(0.005 / 0.37));
    CHECK(d2.expected_return >= d1.expected_return);
    CHECK(evaluate_policy_exact(env.mdp, tree_to_policy(d2.tree, env.features)).expected_return ==
          doctest::Approx(d2.expected_return).epsilon(1e-12));
  }

  TEST_CASE("matches an exhaustive scan over a small chain") {
    // Every depth-1 tree on the 3-state chain, scored independently.
    const auto m = omdt::testing::chain3();
    const auto f = omdt::testing::single_feature(3);
    const auto th = candidate_thresholds(f);
    double best = -1e300;
    for (double k : th.values[0])
      for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t r = 0; r < 2; ++r) {
          const auto pol = tree_to_policy(DecisionTree(1, {{0, k}}, {l, r}), f);
          best = std::max(best, evaluate_policy_exact(m, pol).expected_return);
        }
    CHECK(enumerate_trees(m, f, 1, th).expected_return == doctest::Approx(best).epsilon(1e-12));
  }

  TEST_CASE("budget overflow reports the space size") {
    const auto env = build_env({"frozenlake_4x4"});
    try {
      enumerate_trees(env.mdp, env.features, 3, candidate_thresholds(env.features), 1e6);
      FAIL("expected BudgetExceeded");
    } catch (const BudgetExceeded& e) {
      CHECK(e.space_size() == doctest::Approx(std::pow(8.0, 7) * std::pow(4.0, 8)));
    }
  }
}
