#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "commgate/config.hpp"
#include "commgate/evaluate.hpp"
#include "commgate/oracle.hpp"
#include "commgate/report.hpp"
#include "commgate/sweep.hpp"
#include "commgate/trainer.hpp"

namespace {

using namespace commgate;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitEval = 4;

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<int> parse_ints(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string env_tag;
  std::string mode;
  std::string enforcer;
  double budget = -1.0;
  int64_t seed = -1;
  std::string out;
  bool paper_preset = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "experiment config JSON");
  cmd->add_option("--override", f.overrides, "block.key=value override (repeatable)");
  cmd->add_option("--env", f.env_tag, "tj-easy|tj-medium|pp-5x5|pp-10x10");
  cmd->add_option("--mode", f.mode,
                  "fixed-cts|fixed-proto|gated-cts|gated-proto|enforcer");
  cmd->add_option("--enforcer", f.enforcer, "none|commmax|soft|hard");
  cmd->add_option("--budget", f.budget, "budget fraction b");
  cmd->add_option("--seed", f.seed, "single seed (replaces the seeds list)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--paper-preset", f.paper_preset,
                "16 workers x 500 steps x 10 mini-updates");
}

ExperimentConfig build_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = ExperimentConfig::load_file(f.config_path);
  if (!f.env_tag.empty()) cfg.env.tag = f.env_tag;
  if (!f.mode.empty()) cfg.mode = run_mode_from_name(f.mode);
  if (!f.enforcer.empty()) cfg.budget.mode = enforcer_mode_from_name(f.enforcer);
  if (f.budget >= 0.0) cfg.budget.b = f.budget;
  if (f.seed >= 0) cfg.seeds = {static_cast<uint64_t>(f.seed)};
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.paper_preset) {
    cfg.train.workers = 16;
    cfg.train.batch_steps = 500;
    cfg.train.mini_updates = 10;
  }
  if (cfg.mode == RunMode::Enforcer && cfg.budget.mode == EnforcerMode::None)
    cfg.budget.mode = EnforcerMode::Soft;
  for (const auto& ov : f.overrides) cfg.apply_override(ov);
  cfg.curriculum.reward_based = !cfg.env.is_tj();
  cfg.validate();
  return cfg;
}

int cmd_train(const CommonFlags& flags, const std::string& resume) {
  ExperimentConfig cfg = build_config(flags);
  for (uint64_t seed : cfg.seeds) {
    std::string run_dir = cfg.out_dir + "/seed" + std::to_string(seed);
    RunResult r = run_training(cfg, seed, run_dir, resume);
    std::printf("seed %llu: %d epochs, final phase %s, success %.3f, c %.3f -> %s\n",
                static_cast<unsigned long long>(seed), r.epochs_run,
                phase_name(r.final_phase).c_str(), r.last_stats.success_rate,
                r.last_stats.c, run_dir.c_str());
  }
  return kExitOk;
}

int cmd_evaluate(const std::string& checkpoint, int episodes, const std::string& env_tag,
                 uint64_t seed, const std::string& out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  EnvConfig env_cfg;
  env_cfg.tag = env_tag.empty() ? ck.meta.env_tag : env_tag;
  EvalResult res = evaluate_checkpoint(ck, env_cfg, episodes, seed);
  std::string text = res.to_json().dump(2);
  std::printf("%s\n", text.c_str());
  if (!out.empty()) {
    std::ofstream f(out);
    f << text << "\n";
  }
  return kExitOk;
}

int cmd_oracle(const std::string& env_tag, int n_max, int max_steps, double p_arrive,
               int history, int toy, uint64_t max_nodes, uint64_t max_policies,
               const std::string& out) {
  OracleConfig cfg;
  if (toy > 0) {
    cfg.env = TrafficJunctionConfig::toy(toy, n_max > 0 ? n_max : 2,
                                         max_steps > 0 ? max_steps : 6,
                                         p_arrive >= 0 ? p_arrive : 0.3);
  } else {
    EnvConfig env_cfg;
    env_cfg.tag = env_tag;
    if (n_max > 0) env_cfg.n_max = n_max;
    if (max_steps > 0) env_cfg.max_steps = max_steps;
    if (p_arrive >= 0) env_cfg.p_arrive = p_arrive;
    cfg.env = env_cfg.tj_config();
  }
  cfg.history = history;
  cfg.max_nodes = max_nodes;
  cfg.max_policies = max_policies;
  OracleResult res = solve(cfg);
  std::string text = res.to_json().dump(2);
  std::printf("%s\n", text.c_str());
  if (!out.empty()) {
    std::ofstream f(out);
    f << text << "\n";
  }
  return kExitOk;
}

int cmd_sweep(const CommonFlags& flags, const std::string& protos,
              const std::string& dims, const std::string& budgets, int eval_episodes) {
  SweepSpec spec;
  spec.base = build_config(flags);
  if (!protos.empty()) spec.n_protos = parse_ints(protos);
  if (!dims.empty()) spec.msg_dims = parse_ints(dims);
  if (!budgets.empty()) spec.budgets = parse_doubles(budgets);
  spec.eval_episodes = eval_episodes;
  SweepResult res = run_sweep(spec, spec.base.out_dir);
  for (const auto& f : res.files_written) std::printf("wrote %s\n", f.c_str());
  int failures = 0;
  for (const auto& cell : res.cells)
    if (!cell.ok) {
      failures += 1;
      std::fprintf(stderr, "cell %s failed: %s\n", cell.name.c_str(),
                   cell.error.c_str());
    }
  std::printf("%zu cells, %d failed\n", res.cells.size(), failures);
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out, int window,
               double threshold) {
  auto files = write_report(runs, out, window, threshold);
  for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"commgate: budget-constrained sparse-discrete multi-agent communication"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  std::string resume;
  auto* train = app.add_subcommand("train", "train one experiment (all seeds)");
  add_common(train, train_flags);
  train->add_option("--resume", resume, "resume from a checkpoint file");

  std::string eval_ckpt, eval_env, eval_out;
  int eval_episodes = 500;
  uint64_t eval_seed = 7;
  auto* evaluate = app.add_subcommand("evaluate", "greedy evaluation of a checkpoint");
  evaluate->add_option("--checkpoint", eval_ckpt)->required();
  evaluate->add_option("--episodes", eval_episodes);
  evaluate->add_option("--env", eval_env, "defaults to the checkpoint's env");
  evaluate->add_option("--seed", eval_seed);
  evaluate->add_option("--out", eval_out, "write the evaluation JSON here");

  std::string oracle_env = "tj-easy", oracle_out;
  int oracle_nmax = 0, oracle_steps = 0, oracle_history = 2, oracle_toy = 0;
  double oracle_p = -1.0;
  uint64_t oracle_nodes = 50000000, oracle_policies = 200000;
  auto* oracle = app.add_subcommand("oracle", "exact no-communication ceiling");
  oracle->add_option("--env", oracle_env, "tj-easy or tj-medium geometry");
  oracle->add_option("--n-max", oracle_nmax);
  oracle->add_option("--max-steps", oracle_steps);
  oracle->add_option("--p-arrive", oracle_p);
  oracle->add_option("--history", oracle_history,
                     "observation-history length (>= max-steps: unrestricted)");
  oracle->add_option("--toy", oracle_toy, "k: use a k x k toy junction");
  oracle->add_option("--max-nodes", oracle_nodes);
  oracle->add_option("--max-policies", oracle_policies);
  oracle->add_option("--out", oracle_out);

  CommonFlags sweep_flags;
  std::string sweep_protos, sweep_dims, sweep_budgets;
  int sweep_eval = 300;
  auto* sweep = app.add_subcommand("sweep", "grid over (n_protos x msg_dim) or budgets");
  add_common(sweep, sweep_flags);
  sweep->add_option("--protos", sweep_protos, "comma list, e.g. 14,28,56");
  sweep->add_option("--dims", sweep_dims, "comma list, e.g. 8,32,128");
  sweep->add_option("--budgets", sweep_budgets, "comma list, e.g. 0.9,0.7,0.5,0.3,0.2");
  sweep->add_option("--eval-episodes", sweep_eval);

  std::vector<std::string> report_runs;
  std::string report_out = "report";
  int report_window = 10;
  double report_threshold = 0.95;
  auto* report = app.add_subcommand("report", "CSV tables + SVG plots from metrics");
  report->add_option("runs", report_runs, "run directories")->required();
  report->add_option("--out", report_out);
  report->add_option("--window", report_window);
  report->add_option("--threshold", report_threshold);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_flags, resume);
    if (*evaluate) return cmd_evaluate(eval_ckpt, eval_episodes, eval_env, eval_seed,
                                       eval_out);
    if (*oracle) return cmd_oracle(oracle_env, oracle_nmax, oracle_steps, oracle_p,
                                   oracle_history, oracle_toy, oracle_nodes,
                                   oracle_policies, oracle_out);
    if (*sweep) return cmd_sweep(sweep_flags, sweep_protos, sweep_dims, sweep_budgets,
                                 sweep_eval);
    if (*report) return cmd_report(report_runs, report_out, report_window,
                                   report_threshold);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return kExitDivergence;
  } catch (const EvalError& e) {
    std::fprintf(stderr, "evaluation error: %s\n", e.what());
    return kExitEval;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
