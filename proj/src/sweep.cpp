#include "commgate/sweep.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "commgate/evaluate.hpp"
#include "commgate/report.hpp"
#include "commgate/trainer.hpp"

namespace commgate {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

SweepCell run_cell(const ExperimentConfig& cell_cfg, const std::string& cell_dir,
                   int eval_episodes) {
  SweepCell cell;
  cell.n_protos = cell_cfg.policy.n_protos;
  cell.msg_dim = cell_cfg.policy.msg_dim;
  try {
    double conv_sum = 0.0;
    bool conv_all = true;
    for (uint64_t seed : cell_cfg.seeds) {
      std::string run_dir = cell_dir + "/seed" + std::to_string(seed);
      RunResult rr = run_training(cell_cfg, seed, run_dir);
      Checkpoint ck = load_checkpoint(rr.final_checkpoint);
      EvalResult ev = evaluate_checkpoint(ck, cell_cfg.env, eval_episodes,
                                          seed + 900000);
      cell.seed_success.push_back(ev.success_rate);
      cell.seed_c.push_back(ev.c);
      cell.success += ev.success_rate;
      cell.c += ev.c;
      cell.mean_reward += ev.mean_reward;
      RunSummary rs = summarize_run(run_dir, cell_cfg.curriculum.window,
                                    cell_cfg.curriculum.success_threshold);
      if (rs.conv_epoch)
        conv_sum += *rs.conv_epoch;
      else
        conv_all = false;
    }
    double n = static_cast<double>(cell_cfg.seeds.size());
    cell.success /= n;
    cell.c /= n;
    cell.mean_reward /= n;
    cell.conv_epoch = conv_all ? conv_sum / n : -1.0;
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  return cell;
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const std::string& out_dir) {
  bool proto_grid = !spec.n_protos.empty() || !spec.msg_dims.empty();
  bool budget_grid = !spec.budgets.empty();
  if (proto_grid == budget_grid)
    throw ConfigError("sweep: give either a prototype grid or a budget list");

  fs::create_directories(out_dir);
  SweepResult result;

  if (proto_grid) {
    auto protos = spec.n_protos.empty() ? std::vector<int>{spec.base.policy.n_protos}
                                        : spec.n_protos;
    auto dims = spec.msg_dims.empty() ? std::vector<int>{spec.base.policy.msg_dim}
                                      : spec.msg_dims;
    for (int np : protos) {
      for (int dp : dims) {
        ExperimentConfig cfg = spec.base;
        cfg.policy.n_protos = np;
        cfg.policy.msg_dim = dp;
        std::string name = "np" + std::to_string(np) + "_dp" + std::to_string(dp);
        SweepCell cell = run_cell(cfg, out_dir + "/" + name, spec.eval_episodes);
        cell.name = name;
        result.cells.push_back(std::move(cell));
      }
    }
    // Table-1 shaped matrix: rows n_protos, columns msg_dim,
    // cell = convergence epoch / final success.
    std::string path = out_dir + "/proto_grid.csv";
    std::ofstream out(path);
    out << "n_protos";
    for (int dp : dims) out << ",dp_" << dp;
    out << "\n";
    size_t idx = 0;
    for (int np : protos) {
      out << np;
      for (size_t j = 0; j < dims.size(); ++j, ++idx) {
        const SweepCell& cell = result.cells[idx];
        if (!cell.ok)
          out << ",ERROR";
        else if (cell.conv_epoch >= 0.0)
          out << "," << fmt(cell.conv_epoch) << "/" << fmt(cell.success);
        else
          out << ",-/" << fmt(cell.success);
      }
      out << "\n";
    }
    result.files_written.push_back(path);
  } else {
    for (double b : spec.budgets) {
      ExperimentConfig cfg = spec.base;
      cfg.budget.b = b;
      char name[32];
      std::snprintf(name, sizeof(name), "b%.2f", b);
      SweepCell cell = run_cell(cfg, out_dir + "/" + name, spec.eval_episodes);
      cell.name = name;
      cell.budget = b;
      result.cells.push_back(std::move(cell));
    }
    // Table-5/6 shaped: budget, comm fraction, success.
    std::string path = out_dir + "/budget_sweep.csv";
    std::ofstream out(path);
    out << "budget,comm_fraction,success,mean_reward,conv_epoch,status\n";
    for (const auto& cell : result.cells) {
      out << fmt(cell.budget) << ",";
      if (cell.ok)
        out << fmt(cell.c) << "," << fmt(cell.success) << "," << fmt(cell.mean_reward)
            << "," << (cell.conv_epoch >= 0 ? fmt(cell.conv_epoch) : "-") << ",ok\n";
      else
        out << "-,-,-,-,ERROR: " << cell.error << "\n";
    }
    result.files_written.push_back(path);
  }

  // Long-form cell dump for downstream tooling.
  std::string path = out_dir + "/sweep_cells.csv";
  std::ofstream out(path);
  out << "name,n_protos,msg_dim,budget,status,success,c,mean_reward,conv_epoch\n";
  for (const auto& cell : result.cells) {
    out << cell.name << "," << cell.n_protos << "," << cell.msg_dim << ","
        << (cell.budget >= 0 ? fmt(cell.budget) : "-") << ","
        << (cell.ok ? "ok" : "ERROR: " + cell.error) << "," << fmt(cell.success) << ","
        << fmt(cell.c) << "," << fmt(cell.mean_reward) << ","
        << (cell.conv_epoch >= 0 ? fmt(cell.conv_epoch) : "-") << "\n";
  }
  result.files_written.push_back(path);
  return result;
}

}  // namespace commgate
