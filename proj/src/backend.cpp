#include "omdt/backend.hpp"

#include <dlfcn.h>
#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "omdt/error.hpp"
#include "omdt/mdp_io.hpp"
#include "omdt/mps.hpp"

namespace omdt {

namespace fs = std::filesystem;

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::TimeLimit: return "time-limit";
  }
  return "time-limit";
}

SolveStatus parse_status(std::string_view text) {
  if (text == "optimal") return SolveStatus::Optimal;
  if (text == "feasible") return SolveStatus::Feasible;
  if (text == "infeasible") return SolveStatus::Infeasible;
  if (text == "time-limit") return SolveStatus::TimeLimit;
  throw ParseError(fmt::format("unknown solve status '{}'", text));
}

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::Cbc: return "cbc";
    case BackendKind::Highs: return "highs";
    case BackendKind::Script: return "script";
  }
  return "cbc";
}

BackendKind parse_backend(std::string_view text) {
  if (text == "cbc") return BackendKind::Cbc;
  if (text == "highs") return BackendKind::Highs;
  if (text == "script") return BackendKind::Script;
  throw InvalidArgument(fmt::format("unknown backend '{}' (expected cbc, highs or script)", text));
}

double SolveOutcome::value(const std::string& name) const {
  const auto it = assignment.find(name);
  return it == assignment.end() ? 0.0 : it->second;
}

std::vector<double> SolveOutcome::values(const MilpModel& model) const {
  std::vector<double> out(model.n_variables(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(model.variables()[i].name);
  return out;
}

void BackendConfig::check() const {
  if (!(time_limit_seconds > 0.0)) throw InvalidArgument("backend: time limit must be positive");
  if (!(rel_gap_target >= 0.0)) throw InvalidArgument("backend: gap target must be non-negative");
  if (threads < 1) throw InvalidArgument("backend: threads must be at least 1");
}

double relative_gap(double objective, double bound) {
  const double diff = std::abs(bound - objective);
  if (diff <= 1e-9 * std::max(1.0, std::abs(objective))) return 0.0;
  return diff / std::max(std::abs(objective), 1e-10);
}

std::string format_solution(const SolveOutcome& outcome, const MilpModel& model) {
  std::string out = fmt::format("=status= {}\n=obj= {:.17g}\n=bound= {:.17g}\n", to_string(outcome.status),
                                outcome.objective, outcome.best_bound);
  for (const auto& v : model.variables()) out += fmt::format("{} {:.17g}\n", v.name, outcome.value(v.name));
  return out;
}

SolveOutcome parse_solution(std::string_view text) {
  SolveOutcome out;
  bool have_obj = false, have_bound = false, have_status = false;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string name, value;
    if (!(ls >> name)) continue;
    if (!(ls >> value)) throw ParseError(fmt::format("solution line {}: missing value", line_no));
    if (name == "=status=") {
      out.status = parse_status(value);
      have_status = true;
      continue;
    }
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0')
      throw ParseError(fmt::format("solution line {}: bad number '{}'", line_no, value));
    if (name == "=obj=") {
      out.objective = v;
      have_obj = true;
    } else if (name == "=bound=") {
      out.best_bound = v;
      have_bound = true;
    } else {
      out.assignment[name] = v;
    }
  }
  if (have_status && !out.has_solution()) return out;
  if (!have_obj) throw ParseError("solution: missing =obj= line");
  if (!have_bound) out.best_bound = out.objective;
  if (!have_status) out.status = have_bound && relative_gap(out.objective, out.best_bound) > 0 ? SolveStatus::Feasible
                                                                                              : SolveStatus::Optimal;
  out.rel_gap = relative_gap(out.objective, out.best_bound);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class ScratchDir {
 public:
  explicit ScratchDir(const fs::path& requested) {
    if (!requested.empty()) {
      fs::create_directories(requested);
      path_ = requested;
      return;
    }
    std::string tmpl = (fs::temp_directory_path() / "omdt-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw Error("cannot create a temporary directory");
    path_ = tmpl;
    owned_ = true;
  }
  ~ScratchDir() {
    if (!owned_) return;
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool owned_ = false;
};

fs::path resolve_executable(const BackendConfig& config) {
  if (!config.executable.empty()) return config.executable;
  if (const char* env = std::getenv(kSolverEnv); env && *env) return env;
  if (config.kind == BackendKind::Script)
    throw InvalidArgument(fmt::format("script backend needs an executable (set {})", kSolverEnv));
  return "cbc";
}

// Runs argv with stdout and stderr sent to `log`; kills the child once
// `deadline_seconds` have passed. Returns the exit status.
int run_process(const std::vector<std::string>& argv, const fs::path& log, double deadline_seconds) {
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  const pid_t pid = fork();
  if (pid < 0) throw Error(fmt::format("fork failed: {}", std::strerror(errno)));
  if (pid == 0) {
    const int fd = open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      dup2(fd, STDOUT_FILENO);
      dup2(fd, STDERR_FILENO);
      close(fd);
    }
    execvp(args[0], args.data());
    _exit(127);
  }
  const auto t0 = Clock::now();
  int status = 0;
  for (;;) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw Error(fmt::format("waitpid failed: {}", std::strerror(errno)));
    if (seconds_since(t0) > deadline_seconds) {
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw Error(fmt::format("{} did not stop within {:.0f} s", argv[0], deadline_seconds));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  throw Error(fmt::format("{} terminated by signal {}", argv[0], WIFSIGNALED(status) ? WTERMSIG(status) : -1));
}

double grace(const BackendConfig& config) { return config.time_limit_seconds * 1.5 + 60.0; }

void finish(SolveOutcome& out, const MilpModel& model, const BackendConfig& config) {
  if (out.has_solution()) {
    out.rel_gap = relative_gap(out.objective, out.best_bound);
    if (out.status == SolveStatus::Optimal && out.rel_gap > config.rel_gap_target + 1e-9)
      out.status = SolveStatus::Feasible;
  } else {
    out.assignment.clear();
    out.rel_gap = std::numeric_limits<double>::infinity();
  }
  (void)model;
}

// ---------------------------------------------------------------------------
// CBC

void write_cbc_start(const MilpModel& model, std::span<const double> start, const fs::path& path) {
  std::string out = fmt::format("Feasible - objective value {:.17g}\n", model.objective_value(start));
  for (std::size_t i = 0; i < model.n_variables(); ++i)
    out += fmt::format("{} {} {:.17g}\n", i, model.variables()[i].name, start[i]);
  write_text_file(path, out);
}

SolveOutcome solve_cbc(const MilpModel& model, const BackendConfig& config, std::span<const double> start,
                       const fs::path& dir) {
  const fs::path mps = dir / "model.mps", sol = dir / "model.sol", log = dir / "solver.log";
  export_mps(model, mps);
  std::error_code ec;
  fs::remove(sol, ec);
  std::vector<std::string> argv{resolve_executable(config).string(), mps.string()};
  // CBC reads the objective sense from the command line, not the file.
  if (model.sense == Sense::Maximize) argv.push_back("-max");
  if (!start.empty()) {
    const fs::path warm = dir / "start.sol";
    write_cbc_start(model, start, warm);
    argv.insert(argv.end(), {"-mips", warm.string()});
  }
  argv.insert(argv.end(), {"-sec", fmt::format("{}", config.time_limit_seconds), "-ratioGap",
                           fmt::format("{}", config.rel_gap_target), "-threads",
                           fmt::format("{}", config.threads), "-timeMode", "elapsed"});
  for (const auto& [k, v] : config.options) {
    argv.push_back("-" + k);
    if (!v.empty()) argv.push_back(v);
  }
  argv.insert(argv.end(), {"-solve", "-solu", sol.string()});

  const int rc = run_process(argv, log, grace(config));
  const std::string text = fs::exists(log) ? read_text_file(log) : "";
  if (rc == 127) throw Error(fmt::format("cannot execute {}", argv[0]));

  SolveOutcome out;
  out.backend = "cbc";
  const double sign = model.sense == Sense::Maximize ? -1.0 : 1.0;
  static const std::regex progress(
      R"(Cbc0010I After \d+ nodes, \d+ on tree, (\S+) best solution, best possible (\S+) \(([\d.]+) seconds\))");
  static const std::regex lower(R"(^Lower bound:\s+(\S+))");
  std::optional<double> final_bound;
  std::istringstream in(text);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_search(line, m, progress)) {
      BoundSample s;
      s.seconds = std::stod(m[3]);
      s.bound = sign * std::stod(m[2]);
      const double inc = std::stod(m[1]);
      if (std::abs(inc) < 1e49) s.incumbent = sign * inc;
      out.trace.push_back(s);
    } else if (std::regex_search(line, m, lower)) {
      final_bound = sign * std::stod(m[1]);
    }
  }
  if (!fs::exists(sol)) throw Error(fmt::format("cbc exited with code {} and wrote no solution; see log:\n{}", rc,
                                                text.substr(text.size() > 2000 ? text.size() - 2000 : 0)));

  std::istringstream sin(read_text_file(sol));
  std::getline(sin, line);
  const bool infeasible = line.find("nfeasible") != std::string::npos;
  const bool stopped = line.rfind("Stopped", 0) == 0;
  const bool optimal = line.rfind("Optimal", 0) == 0;
  const bool no_solution = line.find("no integer solution") != std::string::npos ||
                           line.find("objective value 1e+50") != std::string::npos;
  while (std::getline(sin, line)) {
    std::istringstream ls(line);
    std::string idx, name, value;
    if (line.rfind("**", 0) == 0) ls >> idx;  // infeasibility marker
    if (!(ls >> idx >> name >> value)) continue;
    out.assignment[name] = std::stod(value);
  }
  if (infeasible && !stopped) {
    out.status = SolveStatus::Infeasible;
  } else if (optimal) {
    out.status = SolveStatus::Optimal;
  } else if (stopped && !no_solution && !out.assignment.empty()) {
    out.status = SolveStatus::Feasible;
  } else {
    out.status = SolveStatus::TimeLimit;
  }
  if (out.has_solution()) {
    out.objective = model.objective_value(out.values(model));
    if (final_bound) out.best_bound = *final_bound;
    else if (out.status == SolveStatus::Optimal) out.best_bound = out.objective;
    else if (!out.trace.empty()) out.best_bound = out.trace.back().bound;
    else out.best_bound = out.objective;
    // the bound can never be worse than the incumbent
    if (model.sense == Sense::Maximize) out.best_bound = std::max(out.best_bound, out.objective);
    else out.best_bound = std::min(out.best_bound, out.objective);
  } else if (!out.trace.empty()) {
    out.best_bound = out.trace.back().bound;
  }
  return out;
}

// ---------------------------------------------------------------------------
// generic script

SolveOutcome solve_script(const MilpModel& model, const BackendConfig& config, std::span<const double> start,
                          const fs::path& dir) {
  const fs::path mps = dir / "model.mps", sol = dir / "model.sol", log = dir / "solver.log";
  export_mps(model, mps);
  std::error_code ec;
  fs::remove(sol, ec);
  std::vector<std::string> argv{resolve_executable(config).string(),
                                "--model",
                                mps.string(),
                                "--solution",
                                sol.string(),
                                "--time-limit",
                                fmt::format("{}", config.time_limit_seconds),
                                "--gap",
                                fmt::format("{}", config.rel_gap_target),
                                "--threads",
                                fmt::format("{}", config.threads)};
  if (!start.empty()) {
    SolveOutcome warm;
    warm.status = SolveStatus::Feasible;
    warm.objective = warm.best_bound = model.objective_value(start);
    for (std::size_t i = 0; i < model.n_variables(); ++i) warm.assignment[model.variables()[i].name] = start[i];
    const fs::path wpath = dir / "start.sol";
    write_text_file(wpath, format_solution(warm, model));
    argv.insert(argv.end(), {"--start", wpath.string()});
  }
  for (const auto& [k, v] : config.options) {
    argv.push_back("--" + k);
    if (!v.empty()) argv.push_back(v);
  }
  const int rc = run_process(argv, log, grace(config));
  if (rc != 0) {
    const std::string text = fs::exists(log) ? read_text_file(log) : "";
    throw Error(fmt::format("solver script exited with code {}:\n{}", rc, text));
  }
  SolveOutcome out = parse_solution(read_text_file(sol));
  out.backend = "script";
  if (out.has_solution()) out.objective = model.objective_value(out.values(model));
  return out;
}

// ---------------------------------------------------------------------------
// HiGHS through its C API, loaded at run time

using HighsInt = std::int32_t;

struct HighsApi {
  void* handle = nullptr;
  void* (*create)();
  void (*destroy)(void*);
  HighsInt (*read_model)(void*, const char*);
  HighsInt (*run)(void*);
  HighsInt (*set_option)(void*, const char*, const char*);
  HighsInt (*set_double)(void*, const char*, double);
  HighsInt (*set_int)(void*, const char*, HighsInt);
  HighsInt (*set_bool)(void*, const char*, HighsInt);
  HighsInt (*set_string)(void*, const char*, const char*);
  HighsInt (*get_solution)(const void*, double*, double*, double*, double*);
  HighsInt (*set_solution)(void*, const double*, const double*, const double*, const double*);
  HighsInt (*model_status)(const void*);
  HighsInt (*double_info)(const void*, const char*, double*);
  HighsInt (*int_info)(const void*, const char*, HighsInt*);
  HighsInt (*num_col)(const void*);
  HighsInt (*col_name)(const void*, HighsInt, char*);
  HighsInt (*sizeof_int)();

  explicit HighsApi(const fs::path& lib) {
    handle = dlopen(lib.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (!handle) throw Error(fmt::format("cannot load HiGHS library {}: {}", lib.string(), dlerror()));
    load(create, "Highs_create");
    load(destroy, "Highs_destroy");
    load(read_model, "Highs_readModel");
    load(run, "Highs_run");
    load(set_option, "Highs_setOptionValue");
    load(set_double, "Highs_setDoubleOptionValue");
    load(set_int, "Highs_setIntOptionValue");
    load(set_bool, "Highs_setBoolOptionValue");
    load(set_string, "Highs_setStringOptionValue");
    load(get_solution, "Highs_getSolution");
    load(set_solution, "Highs_setSolution");
    load(model_status, "Highs_getModelStatus");
    load(double_info, "Highs_getDoubleInfoValue");
    load(int_info, "Highs_getIntInfoValue");
    load(num_col, "Highs_getNumCol");
    load(col_name, "Highs_getColName");
    load(sizeof_int, "Highs_getSizeofHighsInt");
    if (sizeof_int() != sizeof(HighsInt))
      throw Error(fmt::format("HiGHS library uses {}-byte integers; only 4 is supported", sizeof_int()));
  }
  ~HighsApi() {
    if (handle) dlclose(handle);
  }
  HighsApi(const HighsApi&) = delete;
  HighsApi& operator=(const HighsApi&) = delete;

 private:
  template <class F>
  void load(F& f, const char* name) {
    f = reinterpret_cast<F>(dlsym(handle, name));
    if (!f) throw Error(fmt::format("HiGHS library lacks {}", name));
  }
};

constexpr HighsInt kHighsOptimal = 7;
constexpr HighsInt kHighsInfeasible = 8;
constexpr HighsInt kHighsTimeLimit = 13;
constexpr HighsInt kHighsInterrupt = 17;
constexpr HighsInt kHighsSolutionFeasible = 2;
constexpr std::size_t kHighsNameLength = 256;

// Progress rows of the MIP log: "... 25.00%   <bound>   <incumbent>   <gap> ... <t>s".
std::vector<BoundSample> parse_highs_log(const std::string& text) {
  static const std::regex row(
      R"(^\s*[A-Za-z]?\s+\d+\s+\d+\s+\d+\s+[\d.]+%\s+(\S+)\s+(\S+)\s+\S+.*\s([\d.]+)s\s*$)");
  std::vector<BoundSample> out;
  std::istringstream in(text);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (!std::regex_search(line, m, row)) continue;
    try {
      BoundSample s;
      s.bound = std::stod(m[1]);
      s.seconds = std::stod(m[3]);
      const std::string inc = m[2];
      if (inc != "-inf" && inc != "inf") s.incumbent = std::stod(inc);
      if (std::isfinite(s.bound)) out.push_back(s);
    } catch (const std::exception&) {
    }
  }
  return out;
}

SolveOutcome solve_highs(const MilpModel& model, const BackendConfig& config, std::span<const double> start,
                         const fs::path& dir) {
  fs::path lib = config.library;
  if (lib.empty()) {
    const char* env = std::getenv(kHighsLibraryEnv);
    if (!env || !*env) throw InvalidArgument(fmt::format("highs backend needs a library path (set {})", kHighsLibraryEnv));
    lib = env;
  }
  const fs::path mps = dir / "model.mps", log = dir / "solver.log";
  export_mps(model, mps);
  HighsApi api(lib);
  void* h = api.create();
  struct Guard {
    HighsApi& api;
    void* h;
    ~Guard() { api.destroy(h); }
  } guard{api, h};

  api.set_bool(h, "log_to_console", 0);
  api.set_string(h, "log_file", log.c_str());
  api.set_double(h, "time_limit", config.time_limit_seconds);
  api.set_double(h, "mip_rel_gap", config.rel_gap_target);
  api.set_int(h, "threads", config.threads);
  for (const auto& [k, v] : config.options)
    if (api.set_option(h, k.c_str(), v.c_str()) != 0)
      throw InvalidArgument(fmt::format("HiGHS rejected option {}={}", k, v));
  if (api.read_model(h, mps.c_str()) < 0) throw Error("HiGHS could not read the model");
  const HighsInt n = api.num_col(h);
  if (n != static_cast<HighsInt>(model.n_variables())) throw Error("HiGHS column count differs from the model");
  if (!start.empty()) api.set_solution(h, start.data(), nullptr, nullptr, nullptr);
  if (api.run(h) < 0) throw Error("HiGHS run failed");

  SolveOutcome out;
  out.backend = "highs";
  const HighsInt status = api.model_status(h);
  HighsInt primal = 0;
  api.int_info(h, "primal_solution_status", &primal);
  if (status == kHighsOptimal) out.status = SolveStatus::Optimal;
  else if (status == kHighsInfeasible) out.status = SolveStatus::Infeasible;
  else if (status == kHighsTimeLimit || status == kHighsInterrupt)
    out.status = primal == kHighsSolutionFeasible ? SolveStatus::Feasible : SolveStatus::TimeLimit;
  else throw Error(fmt::format("HiGHS finished with model status {}", status));

  double bound = 0.0;
  api.double_info(h, "mip_dual_bound", &bound);
  if (out.has_solution()) {
    std::vector<double> x(n);
    api.get_solution(h, x.data(), nullptr, nullptr, nullptr);
    std::vector<char> name(kHighsNameLength);
    for (HighsInt i = 0; i < n; ++i) {
      api.col_name(h, i, name.data());
      out.assignment[name.data()] = x[i];
    }
    out.objective = model.objective_value(out.values(model));
  }
  out.best_bound = bound;
  if (out.has_solution()) {
    if (model.sense == Sense::Maximize) out.best_bound = std::max(out.best_bound, out.objective);
    else out.best_bound = std::min(out.best_bound, out.objective);
  }
  out.trace = parse_highs_log(fs::exists(log) ? read_text_file(log) : "");
  return out;
}

}  // namespace

SolveOutcome solve_milp(const MilpModel& model, const BackendConfig& config, std::span<const double> warm_start) {
  config.check();
  if (const auto problems = model.check(); !problems.empty())
    throw InvalidArgument(fmt::format("model is malformed: {}", problems.front()));
  if (!warm_start.empty() && warm_start.size() != model.n_variables())
    throw InvalidArgument("warm start size differs from the model's column count");
  ScratchDir dir(config.work_dir);
  const auto t0 = Clock::now();
  SolveOutcome out;
  switch (config.kind) {
    case BackendKind::Cbc: out = solve_cbc(model, config, warm_start, dir.path()); break;
    case BackendKind::Highs: out = solve_highs(model, config, warm_start, dir.path()); break;
    case BackendKind::Script: out = solve_script(model, config, warm_start, dir.path()); break;
  }
  out.wall_seconds = seconds_since(t0);
  finish(out, model, config);
  return out;
}

}  // namespace omdt
