#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "omdt/backend.hpp"
#include "omdt/envs.hpp"
#include "omdt/mdp.hpp"

namespace omdt::testing {

inline TabularMdp self_loop(double reward = 1.0, double gamma = 0.99) {
  TabularMdp m(1, 1, gamma);
  m.add_transition(0, 0, 0, 1.0, reward);
  m.p0 = {1.0};
  return m;
}

inline FeatureMatrix single_feature(std::size_t n_states) {
  FeatureMatrix f(n_states, {"x"});
  for (std::size_t s = 0; s < n_states; ++s) f(s, 0) = static_cast<double>(s);
  return f;
}

/// 0 -> 1 -> 2 with reward on the first step; action 1 stays put.
inline TabularMdp chain3() {
  TabularMdp m(3, 2, 0.9);
  m.add_transition(0, 0, 1, 1.0, 1.0);
  m.add_transition(0, 1, 0, 1.0, 0.0);
  m.add_transition(1, 0, 2, 1.0, 0.0);
  m.add_transition(1, 1, 1, 1.0, 0.0);
  m.make_absorbing(2);
  m.p0 = {1.0, 0.0, 0.0};
  return m;
}

/// Policy iteration with dense solves; shares no code with the library's
/// value iteration.
struct PiResult {
  std::vector<double> v;
  std::vector<std::size_t> policy;
};

inline PiResult policy_iteration(const TabularMdp& m) {
  const auto n = static_cast<Eigen::Index>(m.n_states);
  std::vector<std::size_t> pol(m.n_states, 0);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  for (int iter = 0; iter < 1000; ++iter) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    for (std::size_t s = 0; s < m.n_states; ++s)
      for (const auto& t : m.outcomes(s, pol[s])) {
        a(s, t.next) -= m.gamma * t.prob;
        r(s) += t.prob * t.reward;
      }
    v = a.partialPivLu().solve(r);
    bool stable = true;
    for (std::size_t s = 0; s < m.n_states; ++s) {
      auto q = [&](std::size_t act) {
        double total = 0;
        for (const auto& t : m.outcomes(s, act)) total += t.prob * (t.reward + m.gamma * v(t.next));
        return total;
      };
      std::size_t best = pol[s];
      double best_q = q(best);
      for (std::size_t act = 0; act < m.n_actions; ++act)
        if (q(act) > best_q + 1e-12) best = act, best_q = q(act);
      if (best != pol[s]) stable = false, pol[s] = best;
    }
    if (stable) break;
  }
  return {std::vector<double>(v.data(), v.data() + n), pol};
}

inline double start_value(const TabularMdp& m, const std::vector<double>& v) {
  double j = 0;
  for (std::size_t s = 0; s < m.n_states; ++s) j += m.p0[s] * v[s];
  return j;
}

/// Backend from the environment: OMDT_TEST_BACKEND selects cbc or highs,
/// defaulting to highs when OMDT_HIGHS_LIBRARY is set and cbc otherwise.
inline std::string test_backend_kind() {
  if (const char* kind = std::getenv("OMDT_TEST_BACKEND")) return kind;
  return std::getenv(kHighsLibraryEnv) ? "highs" : "cbc";
}

inline bool solver_available() {
  if (test_backend_kind() == "highs") return std::getenv(kHighsLibraryEnv) != nullptr;
  return std::getenv(kSolverEnv) != nullptr;
}

inline BackendConfig test_backend(double time_limit = 600.0) {
  BackendConfig c;
  c.kind = parse_backend(test_backend_kind());
  c.time_limit_seconds = time_limit;
  return c;
}

}  // namespace omdt::testing
