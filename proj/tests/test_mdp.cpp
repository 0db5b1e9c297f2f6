#include <cmath>
#include <set>

#include <doctest.h>

#include "omdt/envs.hpp"
#include "omdt/error.hpp"
#include "omdt/mdp.hpp"
#include "omdt/rng.hpp"
#include "support.hpp"

using namespace omdt;
using omdt::testing::chain3;
using omdt::testing::self_loop;

namespace {

bool rows_stochastic(const TabularMdp& m) {
  for (std::size_t s = 0; s < m.n_states; ++s)
    for (std::size_t a = 0; a < m.n_actions; ++a) {
      double sum = 0;
      for (const auto& t : m.outcomes(s, a)) sum += t.prob;
      if (std::abs(sum - 1.0) > 1e-9) return false;
    }
  return true;
}

}  // namespace

TEST_SUITE("validate") {
  TEST_CASE("well-formed chain has no violations") { CHECK(validate(chain3()).empty()); }

  TEST_CASE("short row names its state-action pair") {
    auto m = chain3();
    m.row(1, 0).front().prob = 0.9;
    const auto v = validate(m);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("(s=1,a=0)") != std::string::npos);
  }

  TEST_CASE("p0 mass of 1.5 names p0") {
    auto m = chain3();
    m.p0 = {1.0, 0.5, 0.0};
    const auto v = validate(m);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rfind("p0", 0) == 0);
  }

  TEST_CASE("require_valid throws on violations") {
    auto m = chain3();
    m.gamma = 1.0;
    CHECK_THROWS_AS(require_valid(m), InvalidArgument);
  }
}

TEST_SUITE("prune_unreachable") {
  TEST_CASE("isolated state is dropped") {
    TabularMdp m(3, 1, 0.9);
    m.add_transition(0, 0, 1, 1.0, 0.0);
    m.make_absorbing(1);
    m.make_absorbing(2);
    m.p0 = {1.0, 0.0, 0.0};
    FeatureMatrix f = omdt::testing::single_feature(3);
    const auto r = prune_unreachable(m, f);
    CHECK(r.mdp.n_states == 2);
    CHECK(r.features.n_rows == 2);
    CHECK(r.index_map[2] == std::nullopt);
    CHECK(r.index_map[1] == 1);
  }

  TEST_CASE("fully reachable MDP maps to itself") {
    const auto m = chain3();
    const auto r = prune_unreachable(m, omdt::testing::single_feature(3));
    for (std::size_t s = 0; s < 3; ++s) CHECK(r.index_map[s] == s);
    CHECK(r.mdp == m);
  }

  TEST_CASE("re-indexing keeps features in lockstep") {
    TabularMdp m(3, 1, 0.9);
    m.add_transition(0, 0, 2, 1.0, 0.0);
    m.make_absorbing(1);
    m.make_absorbing(2);
    m.p0 = {1.0, 0.0, 0.0};
    const auto r = prune_unreachable(m, omdt::testing::single_feature(3));
    REQUIRE(r.mdp.n_states == 2);
    CHECK(r.features(1, 0) == 2.0);
    CHECK(r.mdp.outcomes(0, 0)[0].next == 1);
  }

  TEST_CASE("no initial mass is an error") {
    auto m = chain3();
    m.p0 = {0.0, 0.0, 0.0};
    CHECK_THROWS_AS(prune_unreachable(m, omdt::testing::single_feature(3)), InvalidArgument);
  }

  TEST_CASE("pruning is idempotent on every environment") {
    for (const auto& name : env_names()) {
      CAPTURE(name);
      const auto env = build_env({name});
      const auto again = prune_unreachable(env.mdp, env.features);
      CHECK(again.mdp == env.mdp);
      CHECK(again.features == env.features);
      CHECK(rows_stochastic(env.mdp));
    }
  }
}

TEST_SUITE("value_iteration") {
  TEST_CASE("self-loop with reward 1 is worth 100") {
    const auto r = value_iteration(self_loop());
    CHECK(r.values.v[0] == doctest::Approx(100.0).epsilon(1e-9));
  }

  TEST_CASE("absorbing zero-reward state is worth 0") {
    const auto r = value_iteration(chain3());
    CHECK(r.values.v[2] == 0.0);
    CHECK(r.values.v[0] == doctest::Approx(1.0));
    CHECK(r.policy.action_of[0] == 0);
  }

  TEST_CASE("ties go to the lowest action") {
    TabularMdp m(1, 3, 0.9);
    for (std::size_t a = 0; a < 3; ++a) m.add_transition(0, a, 0, 1.0, a == 0 ? 0.0 : 1.0);
    m.p0 = {1.0};
    CHECK(value_iteration(m).policy.action_of[0] == 1);
  }

  TEST_CASE("iteration budget exhaustion carries the residual") {
    try {
      value_iteration(self_loop(), 1e-10, 5);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.residual() > 1e-10);
    }
  }

  TEST_CASE("agrees with an independent policy iteration on every environment") {
    for (const auto& name : env_names()) {
      CAPTURE(name);
      const auto env = build_env({name});
      const auto vi = value_iteration(env.mdp);
      const auto pi = omdt::testing::policy_iteration(env.mdp);
      double worst = 0;
      for (std::size_t s = 0; s < env.mdp.n_states; ++s)
        worst = std::max(worst, std::abs(vi.values.v[s] - pi.v[s]) / std::max(1.0, std::abs(pi.v[s])));
      CHECK(worst < 1e-6);

      const auto q = q_from_values(env.mdp, vi.values.v);
      for (std::size_t s = 0; s < env.mdp.n_states; ++s)
        CHECK(std::abs(vi.values.v[s] - q.row(static_cast<Eigen::Index>(s)).maxCoeff()) < 1e-9);
      CHECK(greedy_policy(q) == vi.policy);

      const double j = evaluate_policy_exact(env.mdp, vi.policy).expected_return;
      double j_v = 0;
      for (std::size_t s = 0; s < env.mdp.n_states; ++s) j_v += env.mdp.p0[s] * vi.values.v[s];
      CHECK(std::abs(j - j_v) <= 1e-6 * std::max(1.0, std::abs(j_v)));
    }
  }

  TEST_CASE("frozenlake_4x4 anchors match the golden values") {
    const auto env = build_env({"frozenlake_4x4"});
    const auto anchors = compute_anchors(env.mdp);
    const auto pi = omdt::testing::policy_iteration(env.mdp);
    CHECK(anchors.j_opt == doctest::Approx(omdt::testing::start_value(env.mdp, pi.v)).epsilon(1e-7));
    CHECK(anchors.j_opt == doctest::Approx(0.54202593).epsilon(1e-7));
    CHECK(anchors.j_rand == doctest::Approx(0.0123558).epsilon(1e-4));
  }
}

TEST_SUITE("q_from_values") {
  TEST_CASE("self-loop Q is 100") {
    const auto m = self_loop();
    const std::vector<double> v{100.0};
    CHECK(q_from_values(m, v)(0, 0) == doctest::Approx(100.0));
  }

  TEST_CASE("terminal state has zero Q") {
    const auto m = chain3();
    const auto vi = value_iteration(m);
    const auto q = q_from_values(m, vi.values.v);
    CHECK(q(2, 0) == 0.0);
    CHECK(q(2, 1) == 0.0);
  }

  TEST_CASE("frozenlake_4x4 greedy Q equals the VI policy") {
    const auto env = build_env({"frozenlake_4x4"});
    const auto vi = value_iteration(env.mdp);
    CHECK(greedy_policy(q_from_values(env.mdp, vi.values.v)) == vi.policy);
  }
}

TEST_SUITE("evaluate_policy_exact") {
  TEST_CASE("one rewarded step then absorb returns 1") {
    const auto m = chain3();
    CHECK(evaluate_policy_exact(m, DeterministicPolicy{{0, 0, 0}}).expected_return == doctest::Approx(1.0));
  }

  TEST_CASE("uniform policy on the self-loop returns 100") {
    CHECK(evaluate_policy_exact(self_loop(), StochasticPolicy::uniform(1, 1)).expected_return ==
          doctest::Approx(100.0));
  }

  TEST_CASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(evaluate_policy_exact(chain3(), DeterministicPolicy{{0}}), InvalidArgument);
    CHECK_THROWS_AS(evaluate_policy_exact(chain3(), DeterministicPolicy{{0, 5, 0}}), InvalidArgument);
  }

  TEST_CASE("uniform-random frozenlake_4x4 agrees with 1e5 Monte-Carlo episodes") {
    const auto env = build_env({"frozenlake_4x4"});
    const auto uniform = StochasticPolicy::uniform(env.mdp.n_states, env.mdp.n_actions);
    const double exact = evaluate_policy_exact(env.mdp, uniform).expected_return;
    const auto mc = simulate(env.mdp, uniform, 7, 100000, kDefaultMaxSteps, false);
    CHECK(std::abs(mc.report.expected_return - exact) <= 3.0 * *mc.report.std_error);
  }
}

TEST_SUITE("simulate") {
  TEST_CASE("deterministic single path matches the exact return exactly") {
    const auto m = chain3();
    const DeterministicPolicy p{{0, 0, 0}};
    const auto mc = simulate(m, p, 1, 10);
    CHECK(mc.report.expected_return == evaluate_policy_exact(m, p).expected_return);
    CHECK(mc.traces[0] == std::vector<std::size_t>{0, 1, 2});
  }

  TEST_CASE("same seed gives identical traces") {
    const auto env = build_env({"frozenlake_8x8"});
    const auto p = value_iteration(env.mdp).policy;
    const auto a = simulate(env.mdp, p, 42, 50);
    const auto b = simulate(env.mdp, p, 42, 50);
    CHECK(a.traces == b.traces);
    CHECK(a.returns == b.returns);
    CHECK(a.report.seed == 42u);
    CHECK(simulate(env.mdp, p, 43, 50).traces != a.traces);
  }

  TEST_CASE("traces follow positive-probability transitions") {
    const auto env = build_env({"tiger_vs_antelope"});
    const auto p = value_iteration(env.mdp).policy;
    const auto sim = simulate(env.mdp, p, 3, 20, 100);
    for (const auto& trace : sim.traces)
      for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
        bool found = false;
        for (const auto& t : env.mdp.outcomes(trace[i], p.action_of[trace[i]]))
          found = found || (t.next == trace[i + 1] && t.prob > 0);
        CHECK(found);
      }
  }

  TEST_CASE("max_steps of 0 is rejected") {
    CHECK_THROWS_AS(simulate(chain3(), DeterministicPolicy{{0, 0, 0}}, 0, 1, 0), InvalidArgument);
  }

  TEST_CASE("frozenlake_4x4 optimal policy agrees with 1e5 episodes") {
    const auto env = build_env({"frozenlake_4x4"});
    const auto p = value_iteration(env.mdp).policy;
    const double exact = evaluate_policy_exact(env.mdp, p).expected_return;
    const auto mc = simulate(env.mdp, p, 11, 100000, kDefaultMaxSteps, false);
    CHECK(std::abs(mc.report.expected_return - exact) <= 3.0 * *mc.report.std_error);
  }

  TEST_CASE("Monte-Carlo within 4 standard errors on every environment up to 300 states") {
    for (const auto& name : env_names()) {
      const auto env = build_env({name});
      if (env.mdp.n_states > 300) continue;
      CAPTURE(name);
      const auto p = value_iteration(env.mdp).policy;
      const double exact = evaluate_policy_exact(env.mdp, p).expected_return;
      const auto mc = simulate(env.mdp, p, 5, 10000, kDefaultMaxSteps, false);
      double r_max = 0;
      for (const auto& row : env.mdp.rows)
        for (const auto& t : row) r_max = std::max(r_max, std::abs(t.reward));
      const double truncation = std::pow(env.mdp.gamma, kDefaultMaxSteps) * r_max / (1.0 - env.mdp.gamma);
      CHECK(std::abs(mc.report.expected_return - exact) <= 4.0 * *mc.report.std_error + truncation);
    }
  }
}

TEST_SUITE("normalized_return") {
  TEST_CASE("anchors map to 0 and 1") {
    CHECK(normalized_return(5.0, 2.0, 5.0) == 1.0);
    CHECK(normalized_return(2.0, 2.0, 5.0) == 0.0);
    CHECK(normalized_return(1.0, 2.0, 5.0) < 0.0);
  }

  TEST_CASE("degenerate anchors are rejected") {
    CHECK_THROWS_AS(normalized_return(1.0, 3.0, 3.0), InvalidArgument);
  }
}

TEST_SUITE("rng") {
  TEST_CASE("uniform draws stay in [0, 1) and below() in range") {
    Rng r(123);
    for (int i = 0; i < 10000; ++i) {
      const double u = r.uniform();
      CHECK((u >= 0.0 && u < 1.0));
      CHECK(r.below(7) < 7u);
    }
  }

  TEST_CASE("derived streams differ") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(9, i));
    CHECK(seen.size() == 1000);
  }
}
