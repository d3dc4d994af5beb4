#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "commgate/config.hpp"

namespace commgate {

/// One grid axis pair (prototype count x message dimension) or a budget list.
/// Exactly one of the two grids may be non-empty.
struct SweepSpec {
  ExperimentConfig base;
  std::vector<int> n_protos;
  std::vector<int> msg_dims;
  std::vector<double> budgets;
  int eval_episodes = 300;
};

struct SweepCell {
  std::string name;
  int n_protos = 0, msg_dim = 0;
  double budget = -1.0;
  bool ok = false;
  std::string error;
  // Seed means from greedy evaluation of the final checkpoints.
  double success = 0.0, c = 0.0, mean_reward = 0.0;
  double conv_epoch = -1.0;  // seed mean; -1 when some seed never converged
  std::vector<double> seed_success, seed_c;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<std::string> files_written;
};

/// Runs the cross product, aggregates per-cell seed means, and writes the
/// table-shaped CSVs under out_dir. Failed cells are recorded and the sweep
/// continues.
SweepResult run_sweep(const SweepSpec& spec, const std::string& out_dir);

}  // namespace commgate
