#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "omdt/backend.hpp"
#include "omdt/envs.hpp"
#include "omdt/tree.hpp"
#include "omdt/viper.hpp"

namespace omdt {

/// One experiment cell's outcome.
struct RunRecord {
  std::string env;
  std::string method;  // omdt | viper | oracle | vi | random | exact-tree
  std::size_t depth = 0;
  std::uint64_t seed = 0;
  double time_limit = 0.0;
  std::string status;  // solve status, "done", or "error"
  double objective = 0.0;  // exact expected return of the resulting policy
  double normalized = 0.0;
  double gap = 0.0;
  double bound = 0.0;
  double wall_seconds = 0.0;
  std::size_t n_variables = 0;
  std::size_t n_constraints = 0;
  std::size_t decision_nodes = 0;
  std::string tree_file;
  std::string timestamp;
  std::string message;

  std::string key() const;
};

inline constexpr std::string_view kRecordsCsvHeader =
    "env,method,depth,seed,time_limit,status,objective,normalized,gap,bound,wall_seconds,n_variables,"
    "n_constraints,decision_nodes,tree_file,timestamp,message";

std::string record_csv_row(const RunRecord& r);
std::vector<RunRecord> parse_records_csv(std::string_view text);

struct ExperimentConfig {
  std::filesystem::path out_dir = "runs";
  std::vector<std::string> envs;
  std::vector<std::string> methods;
  std::vector<std::size_t> depths{1, 2, 3};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::uint64_t env_seed = 0;
  double time_limit = 600.0;
  BackendConfig backend;
  ViperConfig viper;
};

/// Reads a JSON experiment description; backend fields default to `base`.
ExperimentConfig parse_experiment_config(std::string_view text, const BackendConfig& base = {});

/// Runs every (env, method, depth, seed) cell. Each cell persists its record
/// and tree under out_dir/<env>/<method>_d<depth>_s<seed>/; cells that
/// already have a record are loaded instead of re-run. Failures become
/// records with status "error". Also rewrites out_dir/records.csv.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config);

enum class ReportFormat { Csv, Markdown };

/// Per-environment rows with mean ± std over seeds of each method's
/// normalized return and runtime, plus the MILP size of the OMDT cells.
std::string emit_report(const std::vector<RunRecord>& records, ReportFormat format);

struct Heatmap {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> visits;  // row-major
  std::size_t episodes = 0;
  double success_rate = 0.0;

  std::string to_csv() const;
};

/// Simulates the policy and counts visits per (row, col) cell. An episode
/// succeeds when it collects a positive return. Throws InvalidArgument when
/// the features have no "row" and "col" columns.
Heatmap path_heatmap(const TabularMdp& mdp, const FeatureMatrix& features, const DeterministicPolicy& policy,
                     std::size_t episodes, std::uint64_t seed, std::size_t max_steps = kDefaultMaxSteps);

}  // namespace omdt
