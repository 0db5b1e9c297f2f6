#include "omdt/extract.hpp"

#include <cmath>

#include <fmt/format.h>

namespace omdt {

SolveOutcome solve_omdt(const OmdtModel& omdt, const BackendConfig& config, const TabularMdp* mdp,
                        const FeatureMatrix* features, const std::optional<DecisionTree>& warm_start) {
  if (!warm_start) return solve_milp(omdt.model, config);
  if (!mdp || !features) throw InvalidArgument("solve_omdt: a warm start needs the MDP and its features");
  const auto start = tree_assignment(omdt.layout, *mdp, *features, *warm_start);
  return solve_milp(omdt.model, config, start);
}

DecisionTree extract_tree(const SolveOutcome& outcome, const OmdtModel& omdt) {
  if (!outcome.has_solution())
    throw ExtractionError(fmt::format("no incumbent to extract (status {})", to_string(outcome.status)));
  const auto values = outcome.values(omdt.model);
  const auto& vars = omdt.model.variables();
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].kind != VarKind::Binary) continue;
    const double v = values[i];
    if (std::min(std::abs(v), std::abs(v - 1.0)) > kIntegralityTol)
      throw ExtractionError(fmt::format("{} = {} is not integral", vars[i].name, v));
  }
  const OmdtLayout& L = omdt.layout;
  std::vector<Split> splits(L.n_branches());
  for (std::size_t m = 0; m < L.n_branches(); ++m) {
    std::optional<std::size_t> chosen;
    for (std::size_t q = 0; q < L.split_choices.size(); ++q) {
      if (values[L.b(m, q)] < 0.5) continue;
      if (chosen) throw ExtractionError(fmt::format("node {} selects more than one split", m));
      chosen = q;
    }
    if (!chosen) throw ExtractionError(fmt::format("node {} selects no split", m));
    splits[m] = L.split_choices[*chosen];
  }
  std::vector<std::size_t> actions(L.n_leaves());
  for (std::size_t t = 0; t < L.n_leaves(); ++t) {
    std::optional<std::size_t> chosen;
    for (std::size_t a = 0; a < L.n_actions; ++a) {
      if (values[L.c(t, a)] < 0.5) continue;
      if (chosen) throw ExtractionError(fmt::format("leaf {} selects more than one action", t));
      chosen = a;
    }
    if (!chosen) throw ExtractionError(fmt::format("leaf {} selects no action", t));
    actions[t] = *chosen;
  }
  return DecisionTree(L.depth, std::move(splits), std::move(actions));
}

VerificationReport verify_solution(const TabularMdp& mdp, const FeatureMatrix& features,
                                   const SolveOutcome& outcome, const DecisionTree& tree,
                                   const OmdtModel& omdt) {
  const OmdtLayout& L = omdt.layout;
  if (mdp.n_states != L.n_states || mdp.n_actions != L.n_actions)
    throw InvalidArgument("verify_solution: MDP does not match the model");
  const auto values = outcome.values(omdt.model);
  VerificationReport r;
  const std::size_t S = L.n_states, A = L.n_actions;

  const DeterministicPolicy policy = tree_to_policy(tree, features);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      const bool on = values[L.pi(s, a)] >= 0.5;
      if (on != (policy.action_of[s] == a)) {
        ++r.policy_mismatches;
        break;
      }
    }
  if (r.policy_mismatches)
    r.failures.push_back(fmt::format("(a) {} states where pi differs from the tree policy", r.policy_mismatches));

  std::vector<double> residual(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    residual[s] -= mdp.p0[s];
    for (std::size_t a = 0; a < A; ++a) {
      const double x = values[L.x(s, a)];
      residual[s] += x;
      r.occupancy_sum += x;
      r.max_occupancy = std::max(r.max_occupancy, x);
      for (const auto& t : mdp.outcomes(s, a)) residual[t.next] -= mdp.gamma * t.prob * x;
    }
  }
  for (double v : residual) r.max_flow_residual = std::max(r.max_flow_residual, std::abs(v));
  if (r.max_flow_residual > kFlowTol)
    r.failures.push_back(fmt::format("(b) flow residual {:.3g} exceeds {:g}", r.max_flow_residual, kFlowTol));

  r.objective = outcome.objective;
  r.exact_return = evaluate_policy_exact(mdp, policy).expected_return;
  const double diff = std::abs(r.objective - r.exact_return);
  r.objective_rel_error = diff / std::max(std::abs(r.exact_return), 1e-12);
  // returns that are exactly zero still carry the solver's feasibility slack
  if (diff > kObjectiveRelTol * std::abs(r.exact_return) + kObjectiveAbsFloor)
    r.failures.push_back(fmt::format("(c) objective {:.10g} vs exact return {:.10g}", r.objective, r.exact_return));

  const double target = 1.0 / (1.0 - mdp.gamma);
  r.occupancy_error = std::abs(r.occupancy_sum - target);
  if (r.occupancy_error > kOccupancyTol)
    r.failures.push_back(fmt::format("(d) occupancy sums to {:.10g}, expected {:.10g}", r.occupancy_sum, target));
  return r;
}

}  // namespace omdt
