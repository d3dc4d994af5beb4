#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "commgate/config.hpp"
#include "commgate/report.hpp"

using namespace commgate;
using nlohmann::json;

TEST_CASE("missing env block is a schema error naming the field") {
  json j = {{"mode", "fixed-cts"}};
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(j), doctest::Contains("env"),
                       ConfigError);
}

TEST_CASE("unknown keys are rejected with their path") {
  json j = {{"env", {{"tag", "tj-easy"}}}, {"trian", {{"workers", 2}}}};
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(j), doctest::Contains("trian"),
                       ConfigError);
  json j2 = {{"env", {{"tag", "tj-easy"}, {"speed", 3}}}};
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(j2), doctest::Contains("env.speed"),
                       ConfigError);
}

TEST_CASE("round trip preserves the config") {
  ExperimentConfig cfg;
  cfg.env.tag = "tj-easy";
  cfg.mode = RunMode::Enforcer;
  cfg.budget.b = 0.25;
  cfg.budget.mode = EnforcerMode::Hard;
  cfg.train.epochs = 123;
  cfg.seeds = {7, 8};
  auto back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.env.tag == "tj-easy");
  CHECK(back.mode == RunMode::Enforcer);
  CHECK(back.budget.b == 0.25);
  CHECK(back.budget.mode == EnforcerMode::Hard);
  CHECK(back.train.epochs == 123);
  CHECK(back.seeds == std::vector<uint64_t>{7, 8});
}

TEST_CASE("override changes only the named field") {
  ExperimentConfig cfg;
  cfg.env.tag = "tj-easy";
  ExperimentConfig before = cfg;
  cfg.apply_override("budget.b=0.3");
  CHECK(cfg.budget.b == 0.3);
  CHECK(cfg.train.epochs == before.train.epochs);
  CHECK(cfg.policy.n_protos == before.policy.n_protos);
  CHECK_THROWS_AS(cfg.apply_override("budget.nope=1"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("no-equals-sign"), ConfigError);
}

TEST_CASE("mode wiring") {
  ExperimentConfig cfg;
  cfg.env.tag = "tj-easy";
  cfg.mode = RunMode::FixedCts;
  CHECK(cfg.gate_fixed_open());
  CHECK_FALSE(cfg.discrete_messages());
  CHECK_FALSE(cfg.curriculum_enabled());
  cfg.mode = RunMode::FixedProto;
  CHECK(cfg.discrete_messages());
  cfg.mode = RunMode::GatedCts;
  CHECK_FALSE(cfg.gate_fixed_open());
  cfg.mode = RunMode::Enforcer;
  CHECK(cfg.curriculum_enabled());
  CHECK(cfg.discrete_messages());
}

TEST_CASE("budget validation") {
  ExperimentConfig cfg;
  cfg.env.tag = "tj-easy";
  cfg.budget.b = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.budget.b = 1.0;
  cfg.mode = RunMode::Enforcer;
  cfg.budget.mode = EnforcerMode::None;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("metrics loader skips corrupt lines with a count") {
  namespace fs = std::filesystem;
  std::string path = (fs::temp_directory_path() / "commgate_metrics.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"epoch":0,"success_rate":0.5,"c":1.0})" << "\n";
    out << "this is not json\n";
    out << R"({"epoch":1,"success_rate":0.9,"c":0.8})" << "\n";
  }
  int skipped = 0;
  auto metrics = load_metrics(path, &skipped);
  CHECK(metrics.size() == 2);
  CHECK(skipped == 1);
}

TEST_CASE("convergence epoch over a trailing window") {
  std::vector<json> metrics;
  for (int e = 0; e < 10; ++e)
    metrics.push_back({{"epoch", e}, {"success_rate", e < 5 ? 0.0 : 1.0}});
  auto conv = convergence_epoch(metrics, "success_rate", 3, 0.95);
  REQUIRE(conv.has_value());
  CHECK(*conv == 7);  // epochs 5,6,7 are the first full window above threshold
  CHECK_FALSE(convergence_epoch(metrics, "success_rate", 3, 1.1).has_value());
}

TEST_CASE("report regeneration is byte identical") {
  namespace fs = std::filesystem;
  std::string run = (fs::temp_directory_path() / "commgate_report_run").string();
  fs::remove_all(run);
  fs::create_directories(run);
  {
    std::ofstream cfg(run + "/config.json");
    cfg << R"({"mode":"fixed-cts","budget":{"b":0.3}})" << "\n";
    std::ofstream out(run + "/metrics.jsonl");
    for (int e = 0; e < 25; ++e) {
      json j = {{"epoch", e},
                {"env", "tj-easy"},
                {"success_rate", e / 25.0},
                {"mean_reward", -1.0 + e * 0.05},
                {"c", 1.0 - e * 0.01}};
      out << j.dump() << "\n";
    }
  }
  std::string out1 = (fs::temp_directory_path() / "commgate_report1").string();
  std::string out2 = (fs::temp_directory_path() / "commgate_report2").string();
  fs::remove_all(out1);
  fs::remove_all(out2);
  write_report({run}, out1, 10, 0.95);
  write_report({run}, out2, 10, 0.95);
  for (const char* name : {"/comparison.csv", "/comm_fraction.svg", "/success.svg"}) {
    std::ifstream a(out1 + name), b(out2 + name);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    CHECK(!sa.empty());
  }
}

TEST_CASE("report on empty metrics errors") {
  namespace fs = std::filesystem;
  std::string run = (fs::temp_directory_path() / "commgate_empty_run").string();
  fs::remove_all(run);
  fs::create_directories(run);
  std::ofstream(run + "/metrics.jsonl").close();
  CHECK_THROWS_AS(summarize_run(run, 10, 0.95), EvalError);
}
