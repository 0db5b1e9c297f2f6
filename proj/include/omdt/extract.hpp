#pragma once

#include <optional>
#include <string>
#include <vector>

#include "omdt/backend.hpp"
#include "omdt/omdt.hpp"

namespace omdt {

inline constexpr double kIntegralityTol = 1e-4;

/// Runs the backend on an OMDT model, optionally starting from a tree.
SolveOutcome solve_omdt(const OmdtModel& omdt, const BackendConfig& config,
                        const TabularMdp* mdp = nullptr, const FeatureMatrix* features = nullptr,
                        const std::optional<DecisionTree>& warm_start = std::nullopt);

/// An assignment that does not describe exactly one tree.
class ExtractionError : public Error {
 public:
  using Error::Error;
};

/// Reads the tree off the b and c columns (the unique entry ≥ 0.5 per node
/// and per leaf); all binaries must be within 1e-4 of 0 or 1.
DecisionTree extract_tree(const SolveOutcome& outcome, const OmdtModel& omdt);

struct VerificationReport {
  // (a) π columns agree with the tree's policy
  std::size_t policy_mismatches = 0;
  // (b) flow equations
  double max_flow_residual = 0.0;
  // (c) objective against exact evaluation
  double objective = 0.0;
  double exact_return = 0.0;
  double objective_rel_error = 0.0;
  // (d) occupancy conservation
  double occupancy_sum = 0.0;
  double occupancy_error = 0.0;
  /// Largest x_{s,a}, for the big-M bound.
  double max_occupancy = 0.0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

inline constexpr double kFlowTol = 1e-6;
inline constexpr double kObjectiveRelTol = 1e-5;
inline constexpr double kObjectiveAbsFloor = 1e-6;
inline constexpr double kOccupancyTol = 1e-6;

VerificationReport verify_solution(const TabularMdp& mdp, const FeatureMatrix& features,
                                   const SolveOutcome& outcome, const DecisionTree& tree,
                                   const OmdtModel& omdt);

}  // namespace omdt
