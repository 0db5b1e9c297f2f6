#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "omdt/milp_model.hpp"

namespace omdt {

enum class SolveStatus { Optimal, Feasible, Infeasible, TimeLimit };

std::string_view to_string(SolveStatus status);
SolveStatus parse_status(std::string_view text);

/// Best bound (and incumbent, when one exists) at a point of the search,
/// in the model's own objective sense.
struct BoundSample {
  double seconds = 0.0;
  double bound = 0.0;
  std::optional<double> incumbent;
};

struct SolveOutcome {
  SolveStatus status = SolveStatus::TimeLimit;
  std::unordered_map<std::string, double> assignment;
  double objective = 0.0;
  double best_bound = 0.0;
  double rel_gap = 0.0;
  double wall_seconds = 0.0;
  std::vector<BoundSample> trace;
  std::string backend;

  bool has_solution() const { return status == SolveStatus::Optimal || status == SolveStatus::Feasible; }
  /// Value of a column; columns the solver omitted are 0.
  double value(const std::string& name) const;
  /// Assignment in the model's column order.
  std::vector<double> values(const MilpModel& model) const;
};

enum class BackendKind { Cbc, Highs, Script };
enum class BackendMode { ExternalExecutable, Linked };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend(std::string_view text);

/// Environment variables consulted when no path is configured.
inline constexpr const char* kSolverEnv = "OMDT_SOLVER";
inline constexpr const char* kHighsLibraryEnv = "OMDT_HIGHS_LIBRARY";

struct BackendConfig {
  BackendKind kind = BackendKind::Cbc;
  /// cbc or script executable; falls back to $OMDT_SOLVER, then "cbc" on PATH.
  std::filesystem::path executable;
  /// libhighs shared object; falls back to $OMDT_HIGHS_LIBRARY.
  std::filesystem::path library;
  double time_limit_seconds = 600.0;
  double rel_gap_target = 1e-4;
  int threads = 1;
  /// Passed through verbatim: "-name value" for cbc and scripts, option
  /// setters for HiGHS.
  std::vector<std::pair<std::string, std::string>> options;
  /// Scratch directory for model, solution and log files; a fresh temporary
  /// directory (removed afterwards) when empty.
  std::filesystem::path work_dir;

  BackendMode mode() const {
    return kind == BackendKind::Highs ? BackendMode::Linked : BackendMode::ExternalExecutable;
  }
  void check() const;
};

/// Runs the configured backend. `warm_start`, when given, is a full
/// assignment in column order offered to the solver as a starting incumbent.
/// Throws Error when the backend cannot be run or reports an error.
SolveOutcome solve_milp(const MilpModel& model, const BackendConfig& config,
                        std::span<const double> warm_start = {});

/// Relative gap |bound − objective| / max(|objective|, 1e-10), 0 when the
/// two agree to 1e-9.
double relative_gap(double objective, double bound);

/// Canonical solution exchange: "name value" lines plus "=obj=", "=bound="
/// and "=status=" lines.
std::string format_solution(const SolveOutcome& outcome, const MilpModel& model);
SolveOutcome parse_solution(std::string_view text);

}  // namespace omdt
