#include "commgate/evaluate.hpp"

#include <cstring>

namespace commgate {

using nlohmann::json;

json EvalResult::to_json() const {
  return json{{"episodes", episodes},
              {"success_rate", success_rate},
              {"mean_reward", mean_reward},
              {"c", c},
              {"c_star", c_star},
              {"c_hard", c_hard},
              {"proto_hist", proto_hist},
              {"distinct_protos", distinct_protos},
              {"messages_checked", messages_checked},
              {"messages_bitwise_codebook", messages_bitwise_codebook},
              {"hard_masked", hard_masked}};
}

RunBehavior eval_behavior(const Checkpoint& ck) {
  RunBehavior b;
  b.training = false;
  b.record_messages = true;
  b.comm_enabled = ck.params.cfg.comm_enabled;
  b.budget.b = 1.0;
  b.dropout_rate = 0.0;
  b.shaping_mode = EnforcerMode::None;
  switch (ck.meta.mode) {
    case RunMode::FixedCts:
    case RunMode::FixedProto:
      b.gate_forced_open = true;
      break;
    case RunMode::GatedCts:
    case RunMode::GatedProto:
      b.gate_forced_open = false;
      break;
    case RunMode::Enforcer:
      b.gate_forced_open = gate_forced_open(ck.meta.phase);
      if (phase_reward_mode(ck.meta.phase, ck.meta.last_active) == EnforcerMode::Hard) {
        b.hard_masking = true;
        b.budget.b = ck.meta.budget_b;
      }
      break;
  }
  return b;
}

EvalResult evaluate_checkpoint(const Checkpoint& ck, const EnvConfig& env_cfg,
                               int episodes, uint64_t seed) {
  if (episodes < 1) throw EvalError("evaluate: need at least one episode");
  auto env = env_cfg.instantiate();
  if (env->spec().obs_dim != ck.params.cfg.obs_dim ||
      env->spec().n_actions != ck.params.cfg.n_actions)
    throw EvalError("evaluate: checkpoint does not match environment " + env_cfg.tag);

  RunBehavior behavior = eval_behavior(ck);

  EvalResult out;
  out.hard_masked = behavior.hard_masking;
  out.proto_hist.assign(static_cast<size_t>(ck.params.cfg.n_protos), 0);

  std::vector<Trajectory> trajs;
  trajs.reserve(static_cast<size_t>(episodes));
  Rng root = Rng(seed).fork(0xE7A1);
  for (int e = 0; e < episodes; ++e) {
    Trajectory traj;
    run_episode(*env, ck.params, behavior, root.fork(static_cast<uint64_t>(e)),
                ActMode::Greedy, traj);
    trajs.push_back(std::move(traj));
  }

  EpochStats stats = summarize_epoch(trajs);
  out.episodes = episodes;
  out.success_rate = stats.success_rate;
  out.mean_reward = stats.mean_reward;
  out.c = stats.c;
  out.c_star = stats.c_star;
  out.c_hard = stats.c_hard;

  const Tensor& bank = *ck.params.bank;
  int d = ck.params.cfg.msg_dim;
  for (const auto& traj : trajs) {
    for (int t = 0; t < traj.length; ++t) {
      for (int i = 0; i < traj.n_agents; ++i) {
        int k = traj.idx(t, i);
        if (!traj.delivered[k]) continue;
        int proto = traj.proto_index[k];
        if (proto < 0) continue;  // continuous mode
        out.proto_hist[static_cast<size_t>(proto)] += 1;
        if (k < static_cast<int>(traj.messages.size()) && !traj.messages[k].empty()) {
          out.messages_checked += 1;
          const double* row = bank.data.data() + static_cast<size_t>(proto) * d;
          if (std::memcmp(row, traj.messages[k].data(),
                          static_cast<size_t>(d) * sizeof(double)) != 0)
            out.messages_bitwise_codebook = false;
        }
      }
    }
  }
  for (long long count : out.proto_hist)
    if (count > 0) out.distinct_protos += 1;
  return out;
}

}  // namespace commgate
