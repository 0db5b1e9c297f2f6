#include "omdt/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "omdt/error.hpp"
#include "omdt/extract.hpp"
#include "omdt/mdp_io.hpp"
#include "omdt/mps.hpp"

namespace omdt {

namespace fs = std::filesystem;
using nlohmann::json;

std::string RunRecord::key() const { return fmt::format("{}/{}_d{}_s{}", env, method, depth, seed); }

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

json record_json(const RunRecord& r) {
  return {{"env", r.env},
          {"method", r.method},
          {"depth", r.depth},
          {"seed", r.seed},
          {"time_limit", r.time_limit},
          {"status", r.status},
          {"objective", r.objective},
          {"normalized", r.normalized},
          {"gap", std::isfinite(r.gap) ? json(r.gap) : json(nullptr)},
          {"bound", r.bound},
          {"wall_seconds", r.wall_seconds},
          {"n_variables", r.n_variables},
          {"n_constraints", r.n_constraints},
          {"decision_nodes", r.decision_nodes},
          {"tree_file", r.tree_file},
          {"timestamp", r.timestamp},
          {"message", r.message}};
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.env = j.at("env");
  r.method = j.at("method");
  r.depth = j.at("depth");
  r.seed = j.at("seed");
  r.time_limit = j.at("time_limit");
  r.status = j.at("status");
  r.objective = j.at("objective");
  r.normalized = j.at("normalized");
  r.gap = j.at("gap").is_null() ? std::numeric_limits<double>::infinity() : j.at("gap").get<double>();
  r.bound = j.at("bound");
  r.wall_seconds = j.at("wall_seconds");
  r.n_variables = j.at("n_variables");
  r.n_constraints = j.at("n_constraints");
  r.decision_nodes = j.at("decision_nodes");
  r.tree_file = j.at("tree_file");
  r.timestamp = j.at("timestamp");
  r.message = j.at("message");
  return r;
}

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct PreparedEnv {
  Environment env;
  ReturnAnchors anchors;
  std::vector<std::string> feature_names;
};

PreparedEnv prepare_env(const std::string& name, std::uint64_t seed, const fs::path& dir) {
  PreparedEnv p;
  const fs::path mdp_file = dir / "mdp.json";
  const fs::path anchor_file = dir / "anchors.json";
  if (fs::exists(mdp_file)) p.env = read_mdp_file(mdp_file);
  else {
    p.env = build_env({name, seed, {}});
    write_mdp_file(p.env.mdp, p.env.features, mdp_file);
  }
  if (fs::exists(anchor_file)) {
    const auto j = json::parse(read_text_file(anchor_file));
    p.anchors = {j.at("j_rand"), j.at("j_opt")};
  } else {
    p.anchors = compute_anchors(p.env.mdp);
    write_text_file(anchor_file, json{{"j_rand", p.anchors.j_rand}, {"j_opt", p.anchors.j_opt}}.dump(2) + "\n");
  }
  return p;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void run_cell(RunRecord& rec, const PreparedEnv& p, const ExperimentConfig& config, const fs::path& cell_dir) {
  const TabularMdp& mdp = p.env.mdp;
  const FeatureMatrix& features = p.env.features;
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<DecisionTree> tree;
  rec.status = "done";
  rec.gap = 0.0;

  if (rec.method == "vi") {
    rec.objective = p.anchors.j_opt;
  } else if (rec.method == "random") {
    rec.objective = p.anchors.j_rand;
  } else if (rec.method == "oracle") {
    const auto r = enumerate_trees(mdp, features, rec.depth, candidate_thresholds(features));
    tree = r.tree;
    rec.objective = r.expected_return;
  } else if (rec.method == "omdt") {
    const OmdtModel model = build_omdt(mdp, features, rec.depth);
    rec.n_variables = model.model.n_variables();
    rec.n_constraints = model.model.n_constraints();
    BackendConfig backend = config.backend;
    backend.time_limit_seconds = config.time_limit;
    backend.work_dir = cell_dir / "solver";
    const SolveOutcome out = solve_omdt(model, backend);
    rec.status = std::string(to_string(out.status));
    rec.gap = out.rel_gap;
    rec.bound = out.best_bound;
    if (out.has_solution()) {
      tree = extract_tree(out, model);
      const auto report = verify_solution(mdp, features, out, *tree, model);
      if (!report.ok()) rec.message = fmt::format("verification: {}", fmt::join(report.failures, "; "));
      rec.objective = report.exact_return;
    }
  } else if (rec.method == "viper") {
    const auto vi = value_iteration(mdp);
    ViperConfig vc = config.viper;
    vc.seed = rec.seed;
    const auto r = viper_train(mdp, features, vi.policy, q_from_values(mdp, vi.values.v), rec.depth, vc);
    tree = r.tree;
    rec.objective = r.exact_return;
  } else if (rec.method == "exact-tree") {
    const auto vi = value_iteration(mdp);
    const auto r = fit_exact_policy_tree(features, vi.policy, mdp.n_actions);
    rec.decision_nodes = r.decision_nodes;
    DeterministicPolicy pol;
    for (std::size_t s = 0; s < mdp.n_states; ++s) pol.action_of.push_back(r.tree.action(features.row(s)));
    rec.objective = evaluate_policy_exact(mdp, pol).expected_return;
    if (r.depth <= 12) tree = r.tree.to_complete(std::max<std::size_t>(1, r.depth));
  } else {
    throw InvalidArgument(fmt::format("unknown method '{}'", rec.method));
  }
  rec.wall_seconds = elapsed(t0);
  if (tree) {
    if (rec.method != "exact-tree") rec.decision_nodes = tree->n_branches();
    const fs::path tree_file = cell_dir / "tree.json";
    write_text_file(tree_file, serialize_tree(*tree, features.names, mdp.action_labels));
    write_text_file(cell_dir / "tree.dot", tree_to_dot(*tree, features.names, mdp.action_labels));
    rec.tree_file = tree_file.string();
  }
  if (rec.status != "time-limit" && rec.status != "infeasible")
    rec.normalized = normalized_return(rec.objective, p.anchors.j_rand, p.anchors.j_opt);
}

}  // namespace

std::string record_csv_row(const RunRecord& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}", csv_field(r.env), csv_field(r.method),
                     r.depth, r.seed, num(r.time_limit), csv_field(r.status), num(r.objective), num(r.normalized),
                     num(r.gap), num(r.bound), num(r.wall_seconds), r.n_variables, r.n_constraints,
                     r.decision_nodes, csv_field(r.tree_file), csv_field(r.timestamp), csv_field(r.message));
}

std::vector<RunRecord> parse_records_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kRecordsCsvHeader) throw ParseError("records: unexpected header");
  std::vector<RunRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    // quoted fields may span lines
    std::string more;
    while (std::count(line.begin(), line.end(), '"') % 2 == 1 && std::getline(in, more)) {
      line += '\n';
      line += more;
      ++line_no;
    }
    const auto f = csv_split(line);
    if (f.size() != 17) throw ParseError(fmt::format("records line {}: expected 17 fields", line_no));
    try {
      RunRecord r;
      r.env = f[0];
      r.method = f[1];
      r.depth = std::stoul(f[2]);
      r.seed = std::stoull(f[3]);
      r.time_limit = std::stod(f[4]);
      r.status = f[5];
      r.objective = std::stod(f[6]);
      r.normalized = std::stod(f[7]);
      r.gap = std::stod(f[8]);
      r.bound = std::stod(f[9]);
      r.wall_seconds = std::stod(f[10]);
      r.n_variables = std::stoul(f[11]);
      r.n_constraints = std::stoul(f[12]);
      r.decision_nodes = std::stoul(f[13]);
      r.tree_file = f[14];
      r.timestamp = f[15];
      r.message = f[16];
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ParseError(fmt::format("records line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

ExperimentConfig parse_experiment_config(std::string_view text, const BackendConfig& base) {
  ExperimentConfig c;
  c.backend = base;
  try {
    const json j = json::parse(text);
    for (auto it = j.begin(); it != j.end(); ++it) {
      static const std::set<std::string> known{"out", "envs", "methods", "depths", "seeds", "env_seed",
                                               "time_limit", "gap", "threads", "backend", "viper"};
      if (!known.contains(it.key())) throw ParseError(fmt::format("experiment: unknown key '{}'", it.key()));
    }
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    c.envs = j.value("envs", std::vector<std::string>{});
    c.methods = j.value("methods", std::vector<std::string>{});
    if (j.contains("depths")) c.depths = j.at("depths").get<std::vector<std::size_t>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.env_seed = j.value("env_seed", c.env_seed);
    c.time_limit = j.value("time_limit", c.time_limit);
    c.backend.rel_gap_target = j.value("gap", c.backend.rel_gap_target);
    c.backend.threads = j.value("threads", c.backend.threads);
    if (j.contains("backend")) c.backend.kind = parse_backend(j.at("backend").get<std::string>());
    if (j.contains("viper")) {
      const auto& v = j.at("viper");
      c.viper.iterations = v.value("iterations", c.viper.iterations);
      c.viper.episodes_per_iteration = v.value("episodes_per_iteration", c.viper.episodes_per_iteration);
      c.viper.max_steps = v.value("max_steps", c.viper.max_steps);
    }
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("experiment: {}", e.what()));
  }
  for (const auto& e : c.envs)
    if (std::find(env_names().begin(), env_names().end(), e) == env_names().end())
      throw ParseError(fmt::format("experiment: unknown environment '{}'", e));
  static const std::set<std::string> methods{"omdt", "viper", "oracle", "vi", "random", "exact-tree"};
  for (const auto& m : c.methods)
    if (!methods.contains(m)) throw ParseError(fmt::format("experiment: unknown method '{}'", m));
  if (!(c.time_limit > 0)) throw ParseError("experiment: time_limit must be positive");
  return c;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& config) {
  std::vector<RunRecord> records;
  if (config.envs.empty() || config.methods.empty()) return records;
  for (const auto& env_name : config.envs) {
    const fs::path env_dir = config.out_dir / env_name;
    std::optional<PreparedEnv> prepared;
    std::string env_error;
    try {
      prepared = prepare_env(env_name, config.env_seed, env_dir);
    } catch (const std::exception& e) {
      env_error = e.what();
    }
    for (const auto& method : config.methods) {
      // depth and seed do not apply to every method
      const bool uses_depth = method == "omdt" || method == "viper" || method == "oracle";
      const bool uses_seed = method == "viper";
      const std::vector<std::size_t> depths = uses_depth ? config.depths : std::vector<std::size_t>{0};
      const std::vector<std::uint64_t> seeds = uses_seed ? config.seeds : std::vector<std::uint64_t>{0};
      for (std::size_t depth : depths)
        for (std::uint64_t seed : seeds) {
          RunRecord rec;
          rec.env = env_name;
          rec.method = method;
          rec.depth = depth;
          rec.seed = seed;
          rec.time_limit = method == "omdt" ? config.time_limit : 0.0;
          const fs::path cell_dir = env_dir / fmt::format("{}_d{}_s{}", method, depth, seed);
          const fs::path record_file = cell_dir / "record.json";
          if (fs::exists(record_file)) {
            records.push_back(record_from_json(json::parse(read_text_file(record_file))));
            continue;
          }
          rec.timestamp = now_utc();
          if (!prepared) {
            rec.status = "error";
            rec.message = env_error;
          } else {
            try {
              run_cell(rec, *prepared, config, cell_dir);
            } catch (const std::exception& e) {
              rec.status = "error";
              rec.message = e.what();
            }
          }
          write_text_file(record_file, record_json(rec).dump(2) + "\n");
          records.push_back(rec);
        }
    }
  }
  std::string csv = std::string(kRecordsCsvHeader) + "\n";
  for (const auto& r : records) csv += record_csv_row(r) + "\n";
  write_text_file(config.out_dir / "records.csv", csv);
  return records;
}

namespace {

struct Stat {
  double mean = 0.0, std = 0.0;
  std::size_t n = 0;
};

Stat stat_of(const std::vector<double>& v) {
  Stat s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

}  // namespace

std::string emit_report(const std::vector<RunRecord>& records, ReportFormat format) {
  if (records.empty()) throw InvalidArgument("emit_report: no records");
  // (env, depth) rows; method column groups
  std::set<std::string> methods;
  std::map<std::pair<std::string, std::size_t>, std::map<std::string, std::vector<const RunRecord*>>> cells;
  for (const auto& r : records) {
    if (r.status == "error") continue;
    methods.insert(r.method);
    cells[{r.env, r.depth}][r.method].push_back(&r);
  }
  // methods without a depth are shown on every depth row of their env
  std::map<std::string, std::map<std::string, std::vector<const RunRecord*>>> depthless;
  for (auto& [k, by_method] : cells)
    if (k.second == 0)
      for (auto& [m, rs] : by_method) depthless[k.first][m] = rs;
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (const auto& [k, _] : cells) {
    if (k.second == 0) {
      bool has_depth_rows = false;
      for (const auto& [k2, __] : cells) has_depth_rows |= k2.first == k.first && k2.second != 0;
      if (has_depth_rows) continue;
    }
    rows.push_back(k);
  }

  std::vector<std::string> header{"env", "depth"};
  for (const auto& m : methods) {
    header.push_back(m + " normalized");
    header.push_back(m + " runtime (s)");
  }
  header.insert(header.end(), {"omdt vars", "omdt constrs"});

  std::vector<std::vector<std::string>> table;
  for (const auto& key : rows) {
    std::vector<std::string> line{key.first, fmt::format("{}", key.second)};
    std::size_t vars = 0, cons = 0;
    for (const auto& m : methods) {
      const std::vector<const RunRecord*>* rs = nullptr;
      const auto& by_method = cells[key];
      if (auto it = by_method.find(m); it != by_method.end()) rs = &it->second;
      else if (auto d = depthless[key.first].find(m); d != depthless[key.first].end()) rs = &d->second;
      if (!rs) {
        line.insert(line.end(), {"", ""});
        continue;
      }
      std::vector<double> norm, time;
      for (const auto* r : *rs) {
        norm.push_back(r->normalized);
        time.push_back(r->wall_seconds);
        if (m == "omdt") {
          vars = r->n_variables;
          cons = r->n_constraints;
        }
      }
      const Stat sn = stat_of(norm), st = stat_of(time);
      line.push_back(fmt::format("{:.2f} ± {:.2f}", sn.mean, sn.std));
      line.push_back(fmt::format("{:.1f} ± {:.1f}", st.mean, st.std));
    }
    line.push_back(vars ? fmt::format("{}", vars) : "");
    line.push_back(cons ? fmt::format("{}", cons) : "");
    table.push_back(std::move(line));
  }

  std::string out;
  if (format == ReportFormat::Csv) {
    std::vector<std::string> h;
    for (const auto& c : header) h.push_back(csv_field(c));
    out += fmt::format("{}\n", fmt::join(h, ","));
    for (const auto& line : table) {
      std::vector<std::string> q;
      for (const auto& c : line) q.push_back(csv_field(c));
      out += fmt::format("{}\n", fmt::join(q, ","));
    }
  } else {
    out += fmt::format("| {} |\n", fmt::join(header, " | "));
    out += "|";
    for (std::size_t i = 0; i < header.size(); ++i) out += i < 2 ? "---|" : "---:|";
    out += "\n";
    for (const auto& line : table) out += fmt::format("| {} |\n", fmt::join(line, " | "));
  }
  return out;
}

std::string Heatmap::to_csv() const {
  std::string out;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out += fmt::format("{}{}", c ? "," : "", visits[r * cols + c]);
    out += "\n";
  }
  return out;
}

Heatmap path_heatmap(const TabularMdp& mdp, const FeatureMatrix& features, const DeterministicPolicy& policy,
                     std::size_t episodes, std::uint64_t seed, std::size_t max_steps) {
  const auto col_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(features.names.begin(), features.names.end(), name);
    if (it == features.names.end())
      throw InvalidArgument(fmt::format("path_heatmap: environment has no '{}' feature", name));
    return static_cast<std::size_t>(it - features.names.begin());
  };
  const std::size_t rc = col_of("row"), cc = col_of("col");
  Heatmap h;
  for (std::size_t s = 0; s < features.n_rows; ++s) {
    h.rows = std::max(h.rows, static_cast<std::size_t>(features(s, rc)) + 1);
    h.cols = std::max(h.cols, static_cast<std::size_t>(features(s, cc)) + 1);
  }
  h.visits.assign(h.rows * h.cols, 0);
  h.episodes = episodes;
  const auto sim = simulate(mdp, policy, seed, episodes, max_steps, true);
  std::size_t successes = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    for (std::size_t s : sim.traces[e])
      ++h.visits[static_cast<std::size_t>(features(s, rc)) * h.cols + static_cast<std::size_t>(features(s, cc))];
    if (sim.returns[e] > 0.0) ++successes;
  }
  h.success_rate = episodes ? static_cast<double>(successes) / static_cast<double>(episodes) : 0.0;
  return h;
}

}  // namespace omdt
