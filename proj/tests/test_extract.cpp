#include <doctest.h>
#include <fmt/format.h>

#include "omdt/envs.hpp"
#include "omdt/extract.hpp"
#include "support.hpp"

using namespace omdt;

namespace {

struct Fixture {
  Environment env = build_env({"frozenlake_4x4"});
  OmdtModel om = build_omdt(env.mdp, env.features, 2);
  DecisionTree tree{2, {{0, 1.0}, {1, 0.0}, {1, 2.0}}, {0, 1, 2, 3}};

  SolveOutcome outcome() const {
    const auto values = tree_assignment(om.layout, env.mdp, env.features, tree);
    SolveOutcome o;
    o.status = SolveStatus::Feasible;
    for (std::size_t i = 0; i < values.size(); ++i) o.assignment[om.model.variables()[i].name] = values[i];
    o.objective = om.model.objective_value(values);
    o.best_bound = o.objective;
    return o;
  }
};

}  // namespace

TEST_SUITE("extract_tree") {
  TEST_CASE("hand-built depth-1 assignment gives that tree") {
    const auto env = build_env({"frozenlake_4x4"});
    const auto om = build_omdt(env.mdp, env.features, 1);
    const DecisionTree tree(1, {{1, 2.0}}, {3, 1});
    const auto values = tree_assignment(om.layout, env.mdp, env.features, tree);
    SolveOutcome o;
    o.status = SolveStatus::Optimal;
    for (std::size_t i = 0; i < values.size(); ++i) o.assignment[om.model.variables()[i].name] = values[i];
    CHECK(extract_tree(o, om) == tree);
  }

  TEST_CASE("two splits at 0.5 are ambiguous") {
    Fixture f;
    auto o = f.outcome();
    o.assignment["b_m0_f0_t1"] = 0.5;
    o.assignment["b_m0_f0_t2"] = 0.5;
    CHECK_THROWS_AS(extract_tree(o, f.om), ExtractionError);
  }

  TEST_CASE("a leaf without an action is rejected") {
    Fixture f;
    auto o = f.outcome();
    o.assignment["c_l2_a2"] = 0.0;
    CHECK_THROWS_AS(extract_tree(o, f.om), ExtractionError);
  }

  TEST_CASE("fractional binaries are rejected") {
    Fixture f;
    auto o = f.outcome();
    o.assignment["d_s3_m1"] = 0.2;
    CHECK_THROWS_AS(extract_tree(o, f.om), ExtractionError);
    o = f.outcome();
    o.assignment["pi_s3_a0"] += 5e-5;
    CHECK_NOTHROW(extract_tree(o, f.om));
  }

  TEST_CASE("outcomes without a solution are rejected") {
    Fixture f;
    auto o = f.outcome();
    o.status = SolveStatus::TimeLimit;
    CHECK_THROWS_AS(extract_tree(o, f.om), ExtractionError);
  }
}

TEST_SUITE("verify_solution") {
  TEST_CASE("consistent assignment passes every check") {
    Fixture f;
    const auto o = f.outcome();
    const auto r = verify_solution(f.env.mdp, f.env.features, o, extract_tree(o, f.om), f.om);
    CHECK(r.ok());
    CHECK(r.policy_mismatches == 0);
    CHECK(r.occupancy_sum == doctest::Approx(100.0));
    CHECK(r.max_occupancy <= 100.0 + 1e-6);
  }

  TEST_CASE("tampered policy entry fails the policy check") {
    Fixture f;
    auto o = f.outcome();
    const auto tree = extract_tree(o, f.om);
    const auto a = tree_to_policy(tree, f.env.features).action_of[6];
    o.assignment[fmt::format("pi_s6_a{}", a)] = 0.0;
    o.assignment[fmt::format("pi_s6_a{}", (a + 1) % 4)] = 1.0;
    const auto r = verify_solution(f.env.mdp, f.env.features, o, tree, f.om);
    CHECK(r.policy_mismatches == 1);
    REQUIRE_FALSE(r.ok());
    CHECK(r.failures.front().rfind("(a)", 0) == 0);
  }

  TEST_CASE("re-evaluating with another discount fails the objective check") {
    Fixture f;
    const auto o = f.outcome();
    auto other = f.env.mdp;
    other.gamma = 0.95;
    const auto r = verify_solution(other, f.env.features, o, extract_tree(o, f.om), f.om);
    bool objective_failed = false;
    for (const auto& msg : r.failures) objective_failed = objective_failed || msg.rfind("(c)", 0) == 0;
    CHECK(objective_failed);
  }

  TEST_CASE("perturbed occupancy fails the flow and conservation checks") {
    Fixture f;
    auto o = f.outcome();
    o.assignment["x_s0_a0"] += 1e-3;
    const auto r = verify_solution(f.env.mdp, f.env.features, o, extract_tree(o, f.om), f.om);
    CHECK(r.max_flow_residual > kFlowTol);
    CHECK(r.occupancy_error > kOccupancyTol);
  }
}

TEST_SUITE("solve_omdt" * doctest::skip(!omdt::testing::solver_available())) {
  TEST_CASE("self-loop objective is 100") {
    const auto m = omdt::testing::self_loop();
    const auto f = omdt::testing::single_feature(1);
    const auto om = build_omdt(m, f, 1);
    const auto out = solve_omdt(om, omdt::testing::test_backend(60));
    REQUIRE(out.status == SolveStatus::Optimal);
    CHECK(out.objective == doctest::Approx(100.0).epsilon(1e-8));
    CHECK(out.value("x_s0_a0") == doctest::Approx(100.0).epsilon(1e-8));
    CHECK(verify_solution(m, f, out, extract_tree(out, om), om).ok());
  }

  TEST_CASE("frozenlake_4x4 depth 1 matches the brute-force oracle") {
    const auto env = build_env({"frozenlake_4x4"});
    const auto om = build_omdt(env.mdp, env.features, 1);
    const auto out = solve_omdt(om, omdt::testing::test_backend(), &env.mdp, &env.features);
    REQUIRE(out.status == SolveStatus::Optimal);
    const auto oracle = enumerate_trees(env.mdp, env.features, 1, om.layout.thresholds);
    CHECK(out.objective == doctest::Approx(oracle.expected_return).epsilon(1e-6));
    const auto tree = extract_tree(out, om);
    CHECK(verify_solution(env.mdp, env.features, out, tree, om).ok());
    for (std::size_t i = 1; i < out.trace.size(); ++i) CHECK(out.trace[i].bound <= out.trace[i - 1].bound + 1e-9);
  }

  TEST_CASE("frozenlake_4x4 depth 2 is 0.37 and warm starts do not hurt") {
    const auto env = build_env({"frozenlake_4x4"});
    const auto om = build_omdt(env.mdp, env.features, 2);
    const auto cold = solve_omdt(om, omdt::testing::test_backend(), &env.mdp, &env.features);
    REQUIRE(cold.status == SolveStatus::Optimal);
    CHECK(cold.objective == doctest::Approx(0.37).epsilon(0.005 / 0.37));
    CHECK(cold.rel_gap <= 1e-4);
    const auto tree = extract_tree(cold, om);
    CHECK(verify_solution(env.mdp, env.features, cold, tree, om).ok());

    const DecisionTree hand(2, {{0, 1.0}, {1, 0.0}, {1, 2.0}}, {0, 1, 2, 3});
    const auto warm = solve_omdt(om, omdt::testing::test_backend(), &env.mdp, &env.features, hand);
    REQUIRE(warm.has_solution());
    CHECK(warm.objective >= cold.objective - 1e-6);
  }
}
