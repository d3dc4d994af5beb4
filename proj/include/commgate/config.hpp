#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "commgate/curriculum.hpp"
#include "commgate/enforcers.hpp"
#include "commgate/env.hpp"
#include "commgate/policy.hpp"

namespace commgate {

/// Training modes mirroring the comparison rows: fixed gate vs learned gate,
/// continuous vs prototype messages, and the budget-enforced curriculum.
enum class RunMode { FixedCts, FixedProto, GatedCts, GatedProto, Enforcer };

std::string run_mode_name(RunMode m);
RunMode run_mode_from_name(const std::string& s);

std::string enforcer_mode_name(EnforcerMode m);
EnforcerMode enforcer_mode_from_name(const std::string& s);

struct TrainConfig {
  int workers = 2;
  int batch_steps = 250;  // env steps per worker per epoch
  int mini_updates = 4;
  int epochs = 600;
  double value_coef = 0.1;
  double entropy_coef = 0.01;
  double grad_clip = 0.5;
  bool adv_norm = true;  // per-update batch advantage standardization
  // Traffic-density ramp (TJ only): arrival probability starts at env_ramp_start
  // and rises by env_ramp_step whenever the recent success rate clears
  // env_ramp_threshold, until the configured p_arrive is reached. Disabled when
  // env_ramp_start <= 0 or >= the target rate.
  double env_ramp_start = 0.05;
  double env_ramp_step = 0.025;
  double env_ramp_threshold = 0.9;
  int env_ramp_window = 5;
  double lr = 0.001;
  double rms_alpha = 0.99;
  double rms_eps = 1e-8;
  int checkpoint_every = 200;

  void validate() const;
};

struct EnvConfig {
  std::string tag = "tj-easy";
  // Optional overrides; negative/zero means "keep the preset value".
  int n_max = 0;        // TJ
  double p_arrive = -1.0;  // TJ
  int max_steps = 0;
  int grid = 0;         // PP
  int n_predators = 0;  // PP
  double gamma = -1.0;

  std::unique_ptr<Env> instantiate() const;
  TrafficJunctionConfig tj_config() const;  // throws unless tag is tj-*
  bool is_tj() const { return tag.rfind("tj-", 0) == 0; }
};

struct ExperimentConfig {
  EnvConfig env;
  RunMode mode = RunMode::FixedCts;
  PolicyConfig policy;  // obs_dim / n_actions filled from the env at run time
  BudgetConfig budget;
  TrainConfig train;
  PhaseCriteria curriculum;
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::string out_dir = "runs/exp";

  bool curriculum_enabled() const { return mode == RunMode::Enforcer; }
  bool gate_fixed_open() const {
    return mode == RunMode::FixedCts || mode == RunMode::FixedProto;
  }
  bool discrete_messages() const {
    return mode == RunMode::FixedProto || mode == RunMode::GatedProto ||
           (mode == RunMode::Enforcer && policy.discrete);
  }

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load_file(const std::string& path);

  /// Applies a dotted-path override like "budget.b=0.25". The value text is
  /// parsed as JSON when possible, else taken as a string. Unknown paths are
  /// config errors.
  void apply_override(const std::string& key_eq_value);
};

}  // namespace commgate
