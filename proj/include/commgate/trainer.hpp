#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "commgate/config.hpp"
#include "commgate/curriculum.hpp"
#include "commgate/enforcers.hpp"
#include "commgate/env.hpp"
#include "commgate/optim.hpp"
#include "commgate/policy.hpp"

namespace commgate {

/// One episode of experience. Step-indexed arrays are laid out
/// [t * n_agents + slot]. Env reward and shaping are stored separately so the
/// reward actually used in returns is auditable as their sum.
struct Trajectory {
  int n_agents = 0;
  int length = 0;
  uint64_t episode_key = 0;  // rng key: noise streams are re-derived from it

  std::vector<std::vector<double>> obs;
  std::vector<uint8_t> acted;
  std::vector<int> action;
  std::vector<double> action_logp;
  std::vector<uint8_t> attempt;
  std::vector<uint8_t> delivered;
  std::vector<double> gate_logp;
  std::vector<uint8_t> gate_sampled;  // 0 when the gate was forced or disabled
  std::vector<int> proto_index;       // -1 when no quantized message materialized
  std::vector<double> env_reward;
  std::vector<double> shaping;  // signed; reward used in returns = env + shaping
  std::vector<double> value;    // rollout-time baseline

  bool success = false;
  int collisions = 0;
  int comm_attempted = 0;
  int comm_delivered = 0;
  int alive_steps = 0;
  int n_units = 0;  // distinct agents that acted (TJ: cars, PP: predators)
  double ep_c = 0.0, ep_c_star = 0.0, ep_c_hard = 0.0;
  double penalty = 0.0;  // the per-step scalar subtracted on alive steps

  /// Delivered message vectors, captured only when RunBehavior.record_messages
  /// is set (evaluation); empty entries elsewhere.
  std::vector<std::vector<double>> messages;

  int idx(int t, int slot) const { return t * n_agents + slot; }
};

/// Behavioral flags resolved from mode + phase for one epoch (or for an
/// evaluation run).
struct RunBehavior {
  bool gate_forced_open = true;
  bool comm_enabled = true;
  bool hard_masking = false;
  EnforcerMode shaping_mode = EnforcerMode::None;
  double penalty_lambda = 0.0;
  double pid_r_d = 0.0;  // epoch-level D and I terms folded into episode shaping
  double pid_r_i = 0.0;
  double dropout_rate = 0.0;
  bool training = true;
  bool record_messages = false;
  BudgetConfig budget;
};

struct EpochStats {
  double success_rate = 0.0;
  double mean_reward = 0.0;  // env-only, per unit per episode
  double c = 0.0, c_star = 0.0, c_hard = 0.0;
  int episodes = 0;
  int env_steps = 0;
  int alive_steps = 0;
  double mean_collisions = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

/// Runs one episode and appends the record to `out`. Used by both training
/// rollouts (sampled actions) and evaluation (greedy).
void run_episode(Env& env, const PolicyParams& params, const RunBehavior& behavior,
                 Rng episode_rng, ActMode mode, Trajectory& out);

/// Fork-join rollout collection: each worker runs complete episodes until its
/// step quota is met, on its own rng stream derived from (seed, epoch, worker).
std::vector<Trajectory> collect_rollouts(const PolicyParams& params,
                                         const EnvConfig& env_cfg,
                                         const RunBehavior& behavior,
                                         const TrainConfig& train, uint64_t seed,
                                         int epoch);

/// Per-slot discounted returns. Return chains never cross agent boundaries:
/// a slot's return resets where its acted mask has a gap (a new car).
std::vector<double> compute_returns(const Trajectory& traj, double gamma);

struct UpdateStats {
  double loss = 0.0;
  double grad_norm = 0.0;  // pre-clip
};

/// Replays the trajectories on the tape with their stored decisions and
/// assembles the scalar REINFORCE loss. Advantages use the rollout-time
/// baselines stored in the trajectories, so the loss is a pure function of
/// the parameters and can be finite-difference checked.
TensorPtr build_loss(Tape* tape, const std::vector<const Trajectory*>& trajs,
                     const PolicyParams& params, const TrainConfig& train,
                     const RunBehavior& behavior, double gamma);

/// One REINFORCE update over a set of trajectories: replays them on a tape
/// with the stored decisions, assembles
///   loss = -sum A_t (log pi_action + log pi_gate [+ log pi_proto])
///          + value_coef * sum (G_t - V_t)^2 - entropy_coef * sum H(pi_action)
/// then clips the global grad norm and applies RMSProp.
UpdateStats reinforce_update(const std::vector<const Trajectory*>& trajs,
                             PolicyParams& params, OptimizerState& opt,
                             const TrainConfig& train, const RunBehavior& behavior,
                             double gamma);

EpochStats summarize_epoch(const std::vector<Trajectory>& trajs);

struct RunResult {
  std::string run_dir;
  std::string final_checkpoint;
  int epochs_run = 0;
  Phase final_phase = Phase::OpenGate;
  EpochStats last_stats;
};

/// Full epoch loop for one seed: collect -> shape -> update x mini-updates ->
/// log -> curriculum advance -> maybe taper, with checkpoints every
/// checkpoint_every epochs and at phase transitions. Writes config.json,
/// metrics.jsonl and checkpoints under run_dir.
RunResult run_training(const ExperimentConfig& cfg, uint64_t seed,
                       const std::string& run_dir,
                       const std::string& resume_checkpoint = "");

}  // namespace commgate
