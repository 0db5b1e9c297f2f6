#include <filesystem>

#include <doctest.h>

#include "omdt/error.hpp"
#include "omdt/experiment.hpp"
#include "omdt/mdp_io.hpp"
#include "support.hpp"

using namespace omdt;
namespace fs = std::filesystem;

namespace {

RunRecord record(const std::string& env, const std::string& method, std::size_t depth, std::uint64_t seed,
                 double normalized, double seconds) {
  RunRecord r;
  r.env = env;
  r.method = method;
  r.depth = depth;
  r.seed = seed;
  r.status = "done";
  r.normalized = normalized;
  r.wall_seconds = seconds;
  return r;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("records") {
  TEST_CASE("csv round trip keeps awkward text") {
    RunRecord r = record("xor", "omdt", 3, 0, 0.5, 12.25);
    r.message = "solver said \"no\", twice\nand stopped";
    r.objective = 0.1 + 0.2;
    r.n_variables = 5016;
    r.tree_file = "runs/xor/omdt_d3_s0/tree.json";
    const std::string text = std::string(kRecordsCsvHeader) + "\n" + record_csv_row(r) + "\n";
    const auto back = parse_records_csv(text);
    REQUIRE(back.size() == 1);
    CHECK(back[0].message == r.message);
    CHECK(back[0].objective == r.objective);
    CHECK(back[0].n_variables == 5016);
    CHECK(back[0].key() == r.key());
  }

  TEST_CASE("wrong header is rejected") { CHECK_THROWS_AS(parse_records_csv("a,b\n"), ParseError); }
}

TEST_SUITE("config") {
  TEST_CASE("fields are read and unknown ones rejected") {
    const auto c = parse_experiment_config(
        R"({"out":"x","envs":["xor"],"methods":["viper"],"depths":[2],"seeds":[4,5],"time_limit":30})");
    CHECK(c.out_dir == "x");
    CHECK(c.depths == std::vector<std::size_t>{2});
    CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(c.time_limit == 30.0);
    CHECK_THROWS_AS(parse_experiment_config(R"({"envz":[]})"), ParseError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"envs":["mars"]})"), ParseError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"methods":["magic"]})"), ParseError);
  }
}

TEST_SUITE("run_experiment") {
  TEST_CASE("empty config gives no records") {
    ExperimentConfig c;
    c.out_dir = scratch("omdt_exp_empty");
    CHECK(run_experiment(c).empty());
  }

  TEST_CASE("oracle, vi and viper cells are persisted and resumed") {
    ExperimentConfig c;
    c.out_dir = scratch("omdt_exp_small");
    c.envs = {"frozenlake_4x4"};
    c.methods = {"oracle", "vi", "viper"};
    c.depths = {1};
    c.seeds = {0, 1};
    c.viper.iterations = 3;
    const auto first = run_experiment(c);
    // oracle d1, vi, viper d1 × 2 seeds
    REQUIRE(first.size() == 4);
    for (const auto& r : first) {
      CAPTURE(r.key());
      CHECK(r.status != "error");
      if (r.method == "oracle") CHECK(r.normalized == doctest::Approx(0.19).epsilon(0.01 / 0.19));
      if (r.method == "vi") CHECK(r.normalized == doctest::Approx(1.0));
      if (!r.tree_file.empty()) {
        const auto env = read_mdp_file(c.out_dir / "frozenlake_4x4" / "mdp.json");
        const auto tree = deserialize_tree(read_text_file(r.tree_file), env.features.names, env.mdp.n_actions);
        const double j = evaluate_policy_exact(env.mdp, tree_to_policy(tree, env.features)).expected_return;
        CHECK(j == doctest::Approx(r.objective).epsilon(1e-5));
      }
    }
    CHECK(fs::exists(c.out_dir / "records.csv"));
    const auto second = run_experiment(c);
    REQUIRE(second.size() == first.size());
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(second[i].timestamp == first[i].timestamp);
    CHECK(parse_records_csv(read_text_file(c.out_dir / "records.csv")).size() == 4);
  }

  TEST_CASE("failing cells become error records") {
    ExperimentConfig c;
    c.out_dir = scratch("omdt_exp_fail");
    c.envs = {"inventory"};
    c.methods = {"oracle"};
    c.depths = {3};
    c.seeds = {0};
    const auto recs = run_experiment(c);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].status == "error");
    CHECK(!recs[0].message.empty());
  }

  TEST_CASE("omdt cell reaches 0.37 on frozenlake_4x4 depth 2" * doctest::skip(!omdt::testing::solver_available())) {
    ExperimentConfig c;
    c.out_dir = scratch("omdt_exp_omdt");
    c.envs = {"frozenlake_4x4"};
    c.methods = {"omdt"};
    c.depths = {2};
    c.seeds = {0};
    c.backend = omdt::testing::test_backend();
    const auto recs = run_experiment(c);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].status == "optimal");
    CHECK(recs[0].objective == doctest::Approx(0.37).epsilon(0.005 / 0.37));
    CHECK(recs[0].n_variables == 216);
  }
}

TEST_SUITE("emit_report") {
  TEST_CASE("three seeds collapse into mean and std") {
    const std::vector<RunRecord> rs{record("xor", "viper", 3, 0, 0.2, 1), record("xor", "viper", 3, 1, 0.4, 2),
                                    record("xor", "viper", 3, 2, 0.6, 3)};
    const auto csv = emit_report(rs, ReportFormat::Csv);
    CHECK(csv.find("0.40 ± 0.20") != std::string::npos);
    CHECK(csv.find("2.0 ± 1.0") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  }

  TEST_CASE("sizes and method groups") {
    auto o = record("frozenlake_4x4", "omdt", 3, 0, 0.96, 20);
    o.n_variables = 328;
    o.n_constraints = 735;
    const std::vector<RunRecord> rs{o, record("frozenlake_4x4", "viper", 3, 0, 0.9, 5)};
    const auto md = emit_report(rs, ReportFormat::Markdown);
    CHECK(md.find("| 328 | 735 |") != std::string::npos);
    CHECK(md.find("omdt normalized") != std::string::npos);
    CHECK(md.find("viper normalized") != std::string::npos);
    CHECK(emit_report(rs, ReportFormat::Markdown) == md);
  }

  TEST_CASE("no records is an error") { CHECK_THROWS_AS(emit_report({}, ReportFormat::Csv), InvalidArgument); }
}

TEST_SUITE("path_heatmap") {
  TEST_CASE("policy heading into a hole never succeeds") {
    const auto env = build_env({"frozenlake_4x4"});
    // "left" never moves right, so the goal is out of reach.
    DeterministicPolicy p{std::vector<std::size_t>(env.mdp.n_states, 0)};
    const auto h = path_heatmap(env.mdp, env.features, p, 200, 1);
    CHECK(h.success_rate == 0.0);
    CHECK(h.rows == 4);
    CHECK(h.visits[0] >= 200);
  }

  TEST_CASE("optimal policy on frozenlake_4x4 succeeds at the optimal rate") {
    const auto env = build_env({"frozenlake_4x4"});
    const auto h = path_heatmap(env.mdp, env.features, value_iteration(env.mdp).policy, 2000, 3);
    CHECK(h.success_rate > 0.6);
    const auto csv = h.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  }

  TEST_CASE("non-grid environment is rejected") {
    const auto env = build_env({"xor"});
    CHECK_THROWS_AS(path_heatmap(env.mdp, env.features, DeterministicPolicy{std::vector<std::size_t>(200, 0)}, 10, 0),
                    InvalidArgument);
  }
}
