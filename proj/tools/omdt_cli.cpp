#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "omdt/envs.hpp"
#include "omdt/experiment.hpp"
#include "omdt/extract.hpp"
#include "omdt/mdp_io.hpp"
#include "omdt/mps.hpp"
#include "omdt/viper.hpp"

namespace fs = std::filesystem;
using namespace omdt;

namespace {

struct EnvArgs {
  std::string name;
  std::string mdp_file;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
};

void add_env_options(CLI::App* app, EnvArgs& a) {
  auto* env = app->add_option("--env", a.name, "Environment identifier");
  auto* file = app->add_option("--mdp", a.mdp_file, "MDP file written by 'env build'");
  env->excludes(file);
  app->add_option("--env-seed", a.seed, "Seed for randomized generators");
  app->add_option("--set", a.overrides, "Generator override key=value")->excludes(file);
}

Environment load_env(const EnvArgs& a) {
  if (!a.mdp_file.empty()) return read_mdp_file(a.mdp_file);
  if (a.name.empty()) throw InvalidArgument("pass --env or --mdp");
  EnvSpec spec{a.name, a.seed, {}};
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidArgument(fmt::format("override '{}' is not key=value", kv));
    spec.overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return build_env(spec);
}

struct SolverArgs {
  double time_limit = 600.0;
  double gap = 1e-4;
  int threads = 1;
  std::string backend = "cbc";
  std::string solver;
  std::string highs_lib;
  std::vector<std::string> options;
};

void add_solver_options(CLI::App* app, SolverArgs& a) {
  app->add_option("--time-limit", a.time_limit, "Solver time limit in seconds")->capture_default_str();
  app->add_option("--gap", a.gap, "Relative optimality gap target")->capture_default_str();
  app->add_option("--threads", a.threads, "Solver threads")->capture_default_str();
  app->add_option("--backend", a.backend, "cbc, highs or script")->capture_default_str();
  app->add_option("--solver", a.solver, fmt::format("Solver executable (default ${} or cbc)", kSolverEnv));
  app->add_option("--highs-lib", a.highs_lib, fmt::format("libhighs path (default ${})", kHighsLibraryEnv));
  app->add_option("--solver-option", a.options, "Backend passthrough option name=value");
}

BackendConfig backend_config(const SolverArgs& a) {
  BackendConfig c;
  c.kind = parse_backend(a.backend);
  c.executable = a.solver;
  c.library = a.highs_lib;
  c.time_limit_seconds = a.time_limit;
  c.rel_gap_target = a.gap;
  c.threads = a.threads;
  for (const auto& kv : a.options) {
    const auto eq = kv.find('=');
    c.options.emplace_back(kv.substr(0, eq), eq == std::string::npos ? "" : kv.substr(eq + 1));
  }
  c.check();
  return c;
}

void write_tree(const fs::path& out, const DecisionTree& tree, const Environment& env) {
  write_text_file(out / "tree.json", serialize_tree(tree, env.features.names, env.mdp.action_labels));
  write_text_file(out / "tree.dot", tree_to_dot(tree, env.features.names, env.mdp.action_labels));
}

void print_tree_summary(const DecisionTree& tree, const Environment& env, double j) {
  const auto anchors = compute_anchors(env.mdp);
  fmt::print("return {:.10g}\nnormalized {:.4f}\n", j, normalized_return(j, anchors.j_rand, anchors.j_opt));
  std::cout << serialize_tree(tree, env.features.names, env.mdp.action_labels);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal decision-tree policies for tabular MDPs"};
  app.require_subcommand(1);

  // env build
  auto* env_cmd = app.add_subcommand("env", "Environment generation")->require_subcommand(1);
  auto* env_build = env_cmd->add_subcommand("build", "Generate an environment and write its MDP file");
  EnvArgs build_args;
  std::string build_out;
  env_build->add_option("name", build_args.name, "Environment identifier")->required();
  env_build->add_option("--seed", build_args.seed, "Seed for randomized generators");
  env_build->add_option("--set", build_args.overrides, "Generator override key=value");
  env_build->add_option("--out", build_out, "Output MDP file");
  auto* env_list = env_cmd->add_subcommand("list", "List environment identifiers");

  auto* solve = app.add_subcommand("solve", "Solvers")->require_subcommand(1);

  auto* solve_vi = solve->add_subcommand("vi", "Value iteration");
  EnvArgs vi_env;
  std::string vi_out;
  add_env_options(solve_vi, vi_env);
  solve_vi->add_option("--out", vi_out, "Write the optimal policy as CSV");

  auto* solve_omdt_cmd = solve->add_subcommand("omdt", "Optimal decision tree via MILP");
  EnvArgs omdt_env;
  SolverArgs omdt_solver;
  std::size_t omdt_depth = 3;
  std::string omdt_out, omdt_warm = "none";
  add_env_options(solve_omdt_cmd, omdt_env);
  add_solver_options(solve_omdt_cmd, omdt_solver);
  solve_omdt_cmd->add_option("--depth", omdt_depth, "Tree depth")->capture_default_str();
  solve_omdt_cmd->add_option("--out", omdt_out, "Output directory (model, solution, tree)");
  solve_omdt_cmd->add_option("--warm-start", omdt_warm, "none, oracle or viper")->capture_default_str();

  auto* solve_viper = solve->add_subcommand("viper", "VIPER imitation baseline");
  EnvArgs viper_env;
  ViperConfig viper_cfg;
  std::size_t viper_depth = 3;
  std::string viper_out;
  add_env_options(solve_viper, viper_env);
  solve_viper->add_option("--depth", viper_depth, "Tree depth")->capture_default_str();
  solve_viper->add_option("--seed", viper_cfg.seed, "Sampling seed")->capture_default_str();
  solve_viper->add_option("--iterations", viper_cfg.iterations)->capture_default_str();
  solve_viper->add_option("--episodes", viper_cfg.episodes_per_iteration, "Episodes per iteration")->capture_default_str();
  solve_viper->add_option("--max-steps", viper_cfg.max_steps)->capture_default_str();
  solve_viper->add_option("--out", viper_out, "Output directory");

  auto* solve_exact = solve->add_subcommand("exact-tree", "Unbounded greedy tree reproducing the optimal policy");
  EnvArgs exact_env;
  add_env_options(solve_exact, exact_env);

  auto* oracle = app.add_subcommand("oracle", "Brute-force tree enumeration");
  EnvArgs oracle_env;
  std::size_t oracle_depth = 1;
  double oracle_budget = kDefaultEnumerationBudget;
  std::string oracle_out;
  add_env_options(oracle, oracle_env);
  oracle->add_option("--depth", oracle_depth, "Tree depth")->capture_default_str();
  oracle->add_option("--budget", oracle_budget, "Maximum number of candidates")->capture_default_str();
  oracle->add_option("--out", oracle_out, "Output directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a tree policy");
  EnvArgs eval_env;
  std::string eval_tree;
  std::size_t eval_episodes = 0;
  std::uint64_t eval_seed = 0;
  add_env_options(eval, eval_env);
  eval->add_option("--tree", eval_tree, "Tree file")->required();
  eval->add_option("--episodes", eval_episodes, "Also run this many Monte-Carlo episodes");
  eval->add_option("--seed", eval_seed, "Monte-Carlo seed");

  auto* run = app.add_subcommand("run", "Run an experiment configuration (resumable)");
  std::string run_config;
  SolverArgs run_solver;
  run->add_option("config", run_config, "Experiment JSON")->required();
  add_solver_options(run, run_solver);

  auto* report = app.add_subcommand("report", "Summarize run records");
  std::string report_records, report_format = "markdown", report_out;
  report->add_option("records", report_records, "records.csv")->required();
  report->add_option("--format", report_format, "csv or markdown")->capture_default_str();
  report->add_option("--out", report_out, "Output file (default stdout)");

  auto* heatmap = app.add_subcommand("heatmap", "Visit counts of a policy on a grid world");
  EnvArgs heat_env;
  std::string heat_tree, heat_out;
  std::size_t heat_episodes = 10000;
  std::uint64_t heat_seed = 0;
  add_env_options(heatmap, heat_env);
  heatmap->add_option("--tree", heat_tree, "Tree file (default: the optimal policy)");
  heatmap->add_option("--episodes", heat_episodes)->capture_default_str();
  heatmap->add_option("--seed", heat_seed)->capture_default_str();
  heatmap->add_option("--out", heat_out, "CSV of visit counts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (env_list->parsed()) {
      for (const auto& n : env_names()) fmt::print("{}\n", n);
    } else if (env_build->parsed()) {
      const Environment env = load_env(build_args);
      const auto th = candidate_thresholds(env.features);
      fmt::print("{}: {} states, {} actions, {} features, sum K = {}\n", env.mdp.name, env.mdp.n_states,
                 env.mdp.n_actions, env.features.n_cols, th.total());
      if (!build_out.empty()) write_mdp_file(env.mdp, env.features, build_out);
    } else if (solve_vi->parsed()) {
      const Environment env = load_env(vi_env);
      const auto vi = value_iteration(env.mdp);
      const auto anchors = compute_anchors(env.mdp);
      fmt::print("iterations {}\nresidual {:.3g}\nj_opt {:.10g}\nj_rand {:.10g}\n", vi.iterations, vi.values.residual,
                 anchors.j_opt, anchors.j_rand);
      if (!vi_out.empty()) {
        std::string csv = "state,action,value\n";
        for (std::size_t s = 0; s < env.mdp.n_states; ++s)
          csv += fmt::format("{},{},{:.17g}\n", s, vi.policy.action_of[s], vi.values.v[s]);
        write_text_file(vi_out, csv);
      }
    } else if (solve_omdt_cmd->parsed()) {
      const Environment env = load_env(omdt_env);
      BackendConfig cfg = backend_config(omdt_solver);
      const OmdtModel model = build_omdt(env.mdp, env.features, omdt_depth);
      fmt::print("model: {} variables, {} constraints, {} nonzeros\n", model.model.n_variables(),
                 model.model.n_constraints(), model.model.n_nonzeros());
      std::optional<DecisionTree> warm;
      if (omdt_warm == "oracle") {
        warm = enumerate_trees(env.mdp, env.features, 1, model.layout.thresholds).tree;
        for (std::size_t d = 1; d < omdt_depth; ++d) warm = deepened(*warm, warm->splits()[0]);
      } else if (omdt_warm == "viper") {
        const auto vi = value_iteration(env.mdp);
        warm = viper_train(env.mdp, env.features, vi.policy, q_from_values(env.mdp, vi.values.v), omdt_depth).tree;
      } else if (omdt_warm != "none") {
        throw InvalidArgument(fmt::format("unknown warm start '{}'", omdt_warm));
      }
      if (!omdt_out.empty()) {
        cfg.work_dir = fs::path(omdt_out) / "solver";
        export_mps(model.model, fs::path(omdt_out) / "model.mps");
      }
      const SolveOutcome out = solve_omdt(model, cfg, &env.mdp, &env.features, warm);
      fmt::print("status {}\nobjective {:.10g}\nbound {:.10g}\ngap {:.3g}\nwall_seconds {:.2f}\n", to_string(out.status),
                 out.objective, out.best_bound, out.rel_gap, out.wall_seconds);
      if (!omdt_out.empty()) write_text_file(fs::path(omdt_out) / "solution.sol", format_solution(out, model.model));
      if (out.has_solution()) {
        const DecisionTree tree = extract_tree(out, model);
        const auto check = verify_solution(env.mdp, env.features, out, tree, model);
        for (const auto& f : check.failures) fmt::print("verification failed: {}\n", f);
        if (check.ok()) fmt::print("verification passed\n");
        if (!omdt_out.empty()) write_tree(omdt_out, tree, env);
        print_tree_summary(tree, env, check.exact_return);
      }
    } else if (solve_viper->parsed()) {
      const Environment env = load_env(viper_env);
      const auto vi = value_iteration(env.mdp);
      const auto r = viper_train(env.mdp, env.features, vi.policy, q_from_values(env.mdp, vi.values.v), viper_depth,
                                 viper_cfg);
      for (std::size_t i = 0; i < r.history.size(); ++i)
        fmt::print("iteration {} dataset {} return {:.10g}\n", i, r.history[i].dataset_size, r.history[i].exact_return);
      if (!viper_out.empty()) write_tree(viper_out, r.tree, env);
      print_tree_summary(r.tree, env, r.exact_return);
    } else if (solve_exact->parsed()) {
      const Environment env = load_env(exact_env);
      const auto vi = value_iteration(env.mdp);
      const auto r = fit_exact_policy_tree(env.features, vi.policy, env.mdp.n_actions);
      fmt::print("decision_nodes {}\ndepth {}\n", r.decision_nodes, r.depth);
    } else if (oracle->parsed()) {
      const Environment env = load_env(oracle_env);
      const auto r = enumerate_trees(env.mdp, env.features, oracle_depth, candidate_thresholds(env.features),
                                     oracle_budget);
      fmt::print("candidates {:.4g}\nevaluated {}\n", r.space_size, r.evaluated);
      if (!oracle_out.empty()) write_tree(oracle_out, r.tree, env);
      print_tree_summary(r.tree, env, r.expected_return);
    } else if (eval->parsed()) {
      const Environment env = load_env(eval_env);
      const DecisionTree tree = deserialize_tree(read_text_file(eval_tree), env.features.names, env.mdp.n_actions);
      const auto policy = tree_to_policy(tree, env.features);
      const double j = evaluate_policy_exact(env.mdp, policy).expected_return;
      const auto anchors = compute_anchors(env.mdp);
      fmt::print("exact {:.10g}\nnormalized {:.4f}\n", j, normalized_return(j, anchors.j_rand, anchors.j_opt));
      if (eval_episodes > 0) {
        const auto sim = simulate(env.mdp, policy, eval_seed, eval_episodes, kDefaultMaxSteps, false);
        fmt::print("monte_carlo {:.10g} ± {:.3g} ({} episodes, seed {})\n", sim.report.expected_return,
                   *sim.report.std_error, eval_episodes, eval_seed);
      }
    } else if (run->parsed()) {
      const auto cfg = parse_experiment_config(read_text_file(run_config), backend_config(run_solver));
      const auto records = run_experiment(cfg);
      for (const auto& r : records)
        fmt::print("{:<40} {:<10} return {:.6g} normalized {:.3f} {:.1f}s {}\n", r.key(), r.status, r.objective,
                   r.normalized, r.wall_seconds, r.message);
    } else if (report->parsed()) {
      const auto records = parse_records_csv(read_text_file(report_records));
      const auto fmt_kind = report_format == "csv" ? ReportFormat::Csv : ReportFormat::Markdown;
      if (report_format != "csv" && report_format != "markdown")
        throw InvalidArgument("--format must be csv or markdown");
      const std::string text = emit_report(records, fmt_kind);
      if (report_out.empty()) std::cout << text;
      else write_text_file(report_out, text);
    } else if (heatmap->parsed()) {
      const Environment env = load_env(heat_env);
      DeterministicPolicy policy;
      if (heat_tree.empty()) policy = value_iteration(env.mdp).policy;
      else policy = tree_to_policy(deserialize_tree(read_text_file(heat_tree), env.features.names, env.mdp.n_actions),
                                   env.features);
      const Heatmap h = path_heatmap(env.mdp, env.features, policy, heat_episodes, heat_seed);
      fmt::print("success_rate {:.4f} ({} episodes, seed {})\n", h.success_rate, h.episodes, heat_seed);
      if (heat_out.empty()) std::cout << h.to_csv();
      else write_text_file(heat_out, h.to_csv());
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
