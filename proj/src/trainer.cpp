#include "commgate/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "commgate/serialize.hpp"

namespace commgate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Decision stream purposes; replay re-derives gumbel and dropout draws from
// the same forks.
enum StreamPurpose : uint64_t { kGate = 0, kAction = 1, kGumbel = 2, kDropout = 3 };

Rng decision_rng(const Rng& episode_rng, int t, int slot, uint64_t purpose) {
  return episode_rng.fork(2).fork(static_cast<uint64_t>(t)).fork(
      static_cast<uint64_t>(slot)).fork(purpose);
}

std::vector<double> gumbel_noise(Rng rng, int n) {
  std::vector<double> noise(static_cast<size_t>(n));
  for (auto& g : noise) g = rng.gumbel();
  return noise;
}

double episode_penalty(const RunBehavior& behavior, double c, double c_star) {
  switch (behavior.shaping_mode) {
    case EnforcerMode::None:
      return 0.0;
    case EnforcerMode::CommMax:
      return behavior.penalty_lambda * comm_max_penalty(c);
    case EnforcerMode::Soft: {
      double r_p = soft_p_term(behavior.budget.b, c, behavior.budget.p_mode);
      return behavior.penalty_lambda *
             (behavior.budget.gain_p * r_p + behavior.budget.gain_d * behavior.pid_r_d +
              behavior.budget.gain_i * behavior.pid_r_i);
    }
    case EnforcerMode::Hard:
      return behavior.penalty_lambda * hard_penalty(c_star, c);
  }
  return 0.0;
}

}  // namespace

void run_episode(Env& env, const PolicyParams& params, const RunBehavior& behavior,
                 Rng episode_rng, ActMode mode, Trajectory& out) {
  const DecPomdpSpec& spec = env.spec();
  int n = spec.n_agents;
  out = Trajectory{};
  out.n_agents = n;
  out.episode_key = episode_rng.key();

  Rng env_rng = episode_rng.fork(1);
  StepResult res = env.reset(env_rng);

  std::vector<AgentState> states(static_cast<size_t>(n), AgentState::fresh(params.cfg));
  std::vector<TokenBucket> buckets;
  for (int i = 0; i < n; ++i) buckets.emplace_back(behavior.budget.b, spec.max_steps);
  for (int i = 0; i < n; ++i) states[i].alive = res.alive[i] != 0;

  Rng mask_rng = episode_rng.fork(3);
  double mask_p = 0.0;
  if (behavior.hard_masking && behavior.training)
    mask_p = mask_rng.uniform(behavior.budget.mask_lo, behavior.budget.mask_hi);

  int t = 0;
  while (!res.done) {
    // Everyone reads last step's messages before anyone writes this step's.
    std::vector<TensorPtr> incoming(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      if (!states[i].alive) continue;
      incoming[i] = behavior.comm_enabled
                        ? aggregate_incoming(nullptr, states, i, params.cfg.msg_dim)
                        : tensor({params.cfg.msg_dim});
    }

    size_t base = out.obs.size();
    out.obs.resize(base + static_cast<size_t>(n));
    out.acted.resize(base + static_cast<size_t>(n), 0);
    out.action.resize(base + static_cast<size_t>(n), 0);
    out.action_logp.resize(base + static_cast<size_t>(n), 0.0);
    out.attempt.resize(base + static_cast<size_t>(n), 0);
    out.delivered.resize(base + static_cast<size_t>(n), 0);
    out.gate_logp.resize(base + static_cast<size_t>(n), 0.0);
    out.gate_sampled.resize(base + static_cast<size_t>(n), 0);
    out.proto_index.resize(base + static_cast<size_t>(n), -1);
    out.env_reward.resize(base + static_cast<size_t>(n), 0.0);
    out.shaping.resize(base + static_cast<size_t>(n), 0.0);
    out.value.resize(base + static_cast<size_t>(n), 0.0);

    std::vector<int> actions(static_cast<size_t>(n), 0);
    std::vector<TensorPtr> new_msg(static_cast<size_t>(n));
    std::vector<uint8_t> new_delivered(static_cast<size_t>(n), 0);
    std::vector<PolicyStep> steps(static_cast<size_t>(n));

    for (int i = 0; i < n; ++i) {
      if (!states[i].alive) continue;
      size_t k = base + static_cast<size_t>(i);
      out.obs[k] = res.obs[i];
      out.acted[k] = 1;
      auto obs_t = tensor_of(res.obs[i]);
      steps[i] = policy_forward(nullptr, params, obs_t, incoming[i], states[i].h,
                                states[i].c);

      GateDecision gate;
      if (!behavior.comm_enabled) {
        gate.attempt = 0;
        gate.delivered = 0;
        gate.forced = true;
      } else if (behavior.gate_forced_open) {
        gate.attempt = 1;
        gate.delivered = 1;
        gate.forced = true;
      } else {
        Rng grng = decision_rng(episode_rng, t, i, kGate);
        gate = gate_sample(*steps[i].gate_logits, grng, mode);
      }
      if (behavior.hard_masking) {
        buckets[i].on_alive_step();
        if (gate.delivered) {
          gate.delivered = buckets[i].try_deliver() ? 1 : 0;
          // Random masking varies training; the token stays spent.
          if (gate.delivered && behavior.training && mask_rng.bernoulli(mask_p))
            gate.delivered = 0;
        }
      }
      out.attempt[k] = static_cast<uint8_t>(gate.attempt);
      out.delivered[k] = static_cast<uint8_t>(gate.delivered);
      out.gate_sampled[k] = gate.forced ? 0 : 1;
      out.gate_logp[k] = gate.forced ? 0.0 : gate.log_prob;
      out.comm_attempted += gate.attempt;
      out.comm_delivered += gate.delivered;
      out.alive_steps += 1;

      if (gate.delivered) {
        Rng qrng = decision_rng(episode_rng, t, i, kGumbel);
        QuantizeResult q = quantize_message(nullptr, params, steps[i].pre_msg, qrng, mode);
        out.proto_index[k] = q.proto_index;
        Rng drng = decision_rng(episode_rng, t, i, kDropout);
        new_msg[i] = comm_dropout(nullptr, q.message, behavior.dropout_rate, drng,
                                  behavior.training);
        new_delivered[i] = 1;
        if (behavior.record_messages) {
          if (out.messages.size() < base + static_cast<size_t>(n))
            out.messages.resize(base + static_cast<size_t>(n));
          out.messages[k] = new_msg[i]->data;
        }
      }

      Rng arng = decision_rng(episode_rng, t, i, kAction);
      ActionSample act = act_and_value(steps[i], arng, mode);
      actions[i] = act.action;
      out.action[k] = act.action;
      out.action_logp[k] = act.log_prob;
      out.value[k] = act.value;
    }

    StepResult next = env.step(actions);
    for (int i = 0; i < n; ++i) {
      size_t k = base + static_cast<size_t>(i);
      out.env_reward[k] = next.rewards[i];
    }

    for (int i = 0; i < n; ++i) {
      if (states[i].alive) {
        states[i].h = steps[i].h;
        states[i].c = steps[i].c;
        states[i].delivered_last = new_delivered[i] != 0;
        if (new_delivered[i]) states[i].last_msg = new_msg[i];
      }
      bool next_alive = next.alive[i] != 0;
      if (!next_alive && states[i].alive) {
        states[i].reset(params.cfg);  // zeroed on death
      } else if (next_alive && !states[i].alive) {
        states[i].reset(params.cfg);  // fresh unit in a reused slot
        states[i].alive = true;
        buckets[i] = TokenBucket(behavior.budget.b, spec.max_steps);
        out.n_units += 1;
      }
    }
    if (t == 0)
      for (int i = 0; i < n; ++i)
        if (out.acted[base + static_cast<size_t>(i)]) out.n_units += 1;

    res = next;
    t += 1;
  }

  out.length = t;
  out.success = env.episode_success();
  out.collisions = env.episode_collisions();
  if (out.alive_steps > 0) {
    out.ep_c = static_cast<double>(out.comm_delivered) / out.alive_steps;
    out.ep_c_star = static_cast<double>(out.comm_attempted) / out.alive_steps;
  }
  out.ep_c_hard = out.ep_c;
  if (out.alive_steps > 0 && behavior.training)
    out.penalty = episode_penalty(behavior, out.ep_c, out.ep_c_star);
  if (out.penalty != 0.0)
    for (int tt = 0; tt < out.length; ++tt)
      for (int i = 0; i < n; ++i)
        if (out.acted[out.idx(tt, i)]) out.shaping[out.idx(tt, i)] = -out.penalty;
}

std::vector<Trajectory> collect_rollouts(const PolicyParams& params,
                                         const EnvConfig& env_cfg,
                                         const RunBehavior& behavior,
                                         const TrainConfig& train, uint64_t seed,
                                         int epoch) {
  int workers = train.workers;
  std::vector<std::vector<Trajectory>> per_worker(static_cast<size_t>(workers));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));

  auto work = [&](int w) {
    try {
      auto env = env_cfg.instantiate();
      Rng worker_rng =
          Rng(seed).fork(0x10 + static_cast<uint64_t>(w)).fork(static_cast<uint64_t>(epoch));
      int steps = 0;
      uint64_t ordinal = 0;
      while (steps < train.batch_steps) {
        Trajectory traj;
        run_episode(*env, params, behavior, worker_rng.fork(ordinal), ActMode::Train,
                    traj);
        steps += traj.length;
        ordinal += 1;
        per_worker[static_cast<size_t>(w)].push_back(std::move(traj));
      }
    } catch (...) {
      errors[static_cast<size_t>(w)] = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& th : threads) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<Trajectory> all;
  for (auto& batch : per_worker)
    for (auto& t : batch) all.push_back(std::move(t));
  return all;
}

std::vector<double> compute_returns(const Trajectory& traj, double gamma) {
  int n = traj.n_agents;
  std::vector<double> returns(traj.env_reward.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    double carry = 0.0;
    bool chain = false;
    for (int t = traj.length - 1; t >= 0; --t) {
      int k = traj.idx(t, i);
      if (!traj.acted[k]) {
        carry = 0.0;
        chain = false;
        continue;
      }
      double reward = traj.env_reward[k] + traj.shaping[k];
      carry = reward + (chain ? gamma * carry : 0.0);
      chain = true;
      returns[k] = carry;
    }
  }
  return returns;
}

TensorPtr build_loss(Tape* tape, const std::vector<const Trajectory*>& trajs,
                     const PolicyParams& params, const TrainConfig& train,
                     const RunBehavior& behavior, double gamma) {
  std::vector<std::pair<TensorPtr, double>> terms;

  // Mean form: every term is averaged over the batch's alive agent-steps so
  // the loss scale (and the grad-clip threshold) is batch-size invariant.
  long long total_alive = 0;
  for (const Trajectory* traj : trajs) total_alive += traj->alive_steps;
  double inv = 1.0 / static_cast<double>(std::max<long long>(1, total_alive));

  // Advantages are per-batch constants (rollout-time baselines), optionally
  // standardized so the policy term operates at unit scale.
  std::vector<std::vector<double>> batch_returns;
  batch_returns.reserve(trajs.size());
  double adv_mean = 0.0, adv_sq = 0.0;
  long long adv_n = 0;
  for (const Trajectory* traj : trajs) {
    batch_returns.push_back(compute_returns(*traj, gamma));
    const auto& ret = batch_returns.back();
    for (size_t k = 0; k < ret.size(); ++k) {
      if (!traj->acted[k]) continue;
      double a = ret[k] - traj->value[k];
      adv_mean += a;
      adv_sq += a * a;
      adv_n += 1;
    }
  }
  double adv_scale = 1.0, adv_shift = 0.0;
  if (train.adv_norm && adv_n > 1) {
    adv_mean /= static_cast<double>(adv_n);
    double var = adv_sq / static_cast<double>(adv_n) - adv_mean * adv_mean;
    adv_shift = adv_mean;
    adv_scale = 1.0 / (std::sqrt(std::max(0.0, var)) + 1e-8);
  }

  for (size_t ti = 0; ti < trajs.size(); ++ti) {
    const Trajectory* traj = trajs[ti];
    int n = traj->n_agents;
    const std::vector<double>& returns = batch_returns[ti];
    Rng episode_rng(traj->episode_key);

    std::vector<TensorPtr> h(static_cast<size_t>(n)), c(static_cast<size_t>(n));
    std::vector<TensorPtr> last_msg(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      h[i] = tensor({params.cfg.hidden});
      c[i] = tensor({params.cfg.hidden});
      last_msg[i] = tensor({params.cfg.msg_dim});
    }

    for (int t = 0; t < traj->length; ++t) {
      std::vector<TensorPtr> msg_now(static_cast<size_t>(n));
      std::vector<TensorPtr> incoming(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        int k = traj->idx(t, i);
        if (!traj->acted[k]) continue;
        if (!behavior.comm_enabled) {
          incoming[i] = tensor({params.cfg.msg_dim});
          continue;
        }
        std::vector<TensorPtr> senders;
        if (t > 0)
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            int kj = traj->idx(t - 1, j);
            if (traj->acted[traj->idx(t, j)] && traj->delivered[kj] && last_msg[j])
              senders.push_back(last_msg[j]);
          }
        incoming[i] = mean_of(tape, senders, params.cfg.msg_dim);
      }

      for (int i = 0; i < n; ++i) {
        int k = traj->idx(t, i);
        if (!traj->acted[k]) continue;
        // Fresh unit in this slot: zero carry.
        if (t > 0 && !traj->acted[traj->idx(t - 1, i)]) {
          h[i] = tensor({params.cfg.hidden});
          c[i] = tensor({params.cfg.hidden});
        }
        auto obs_t = tensor_of(traj->obs[k]);
        PolicyStep step = policy_forward(tape, params, obs_t, incoming[i], h[i], c[i]);
        h[i] = step.h;
        c[i] = step.c;

        double advantage = (returns[k] - traj->value[k] - adv_shift) * adv_scale;
        terms.emplace_back(log_prob_index(tape, step.action_logits, traj->action[k]),
                           -advantage * inv);
        if (traj->gate_sampled[k]) {
          int pick = traj->attempt[k] ? 0 : 1;
          terms.emplace_back(log_prob_index(tape, step.gate_logits, pick),
                             -advantage * inv);
        }
        terms.emplace_back(square_error(tape, step.value, returns[k]),
                           train.value_coef * inv);
        terms.emplace_back(entropy(tape, step.action_logits),
                           -train.entropy_coef * inv);

        if (traj->delivered[k] && params.cfg.discrete) {
          auto noise = gumbel_noise(decision_rng(episode_rng, t, i, kGumbel),
                                    params.cfg.n_protos);
          QuantizeResult q =
              quantize_replay(tape, params, step.pre_msg, traj->proto_index[k], noise);
          Rng drng = decision_rng(episode_rng, t, i, kDropout);
          msg_now[i] = comm_dropout(tape, q.message, behavior.dropout_rate, drng,
                                    behavior.training);
        } else if (traj->delivered[k]) {
          Rng drng = decision_rng(episode_rng, t, i, kDropout);
          msg_now[i] = comm_dropout(tape, step.pre_msg, behavior.dropout_rate, drng,
                                    behavior.training);
        }
      }
      for (int i = 0; i < n; ++i)
        if (msg_now[i]) last_msg[i] = msg_now[i];
    }
  }

  return weighted_sum(tape, terms);
}

UpdateStats reinforce_update(const std::vector<const Trajectory*>& trajs,
                             PolicyParams& params, OptimizerState& opt,
                             const TrainConfig& train, const RunBehavior& behavior,
                             double gamma) {
  UpdateStats stats;
  if (trajs.empty()) return stats;
  Tape tape;
  TensorPtr loss = build_loss(&tape, trajs, params, train, behavior, gamma);
  if (!std::isfinite(loss->data[0]))
    throw DivergenceError("reinforce_update: non-finite loss");
  stats.loss = loss->data[0];
  tape.backward(loss);

  auto plist = params.parameters();
  stats.grad_norm = clip_grad_norm(plist, train.grad_clip);
  rmsprop_update(plist, opt);
  return stats;
}

EpochStats summarize_epoch(const std::vector<Trajectory>& trajs) {
  EpochStats s;
  s.episodes = static_cast<int>(trajs.size());
  if (trajs.empty()) return s;
  long long delivered = 0, attempted = 0, alive = 0;
  double reward_sum = 0.0;
  for (const auto& t : trajs) {
    s.success_rate += t.success ? 1.0 : 0.0;
    s.mean_collisions += t.collisions;
    s.env_steps += t.length;
    delivered += t.comm_delivered;
    attempted += t.comm_attempted;
    alive += t.alive_steps;
    double total_env = 0.0;
    for (double r : t.env_reward) total_env += r;
    reward_sum += t.n_units > 0 ? total_env / t.n_units : 0.0;
  }
  s.success_rate /= s.episodes;
  s.mean_collisions /= s.episodes;
  s.mean_reward = reward_sum / s.episodes;
  s.alive_steps = static_cast<int>(alive);
  if (alive > 0) {
    s.c = static_cast<double>(delivered) / alive;
    s.c_star = static_cast<double>(attempted) / alive;
  }
  s.c_hard = s.c;
  return s;
}

namespace {

RunBehavior make_behavior(const ExperimentConfig& cfg, const CurriculumController& ctl,
                          const EpochCommStats& pid, bool training) {
  RunBehavior b;
  b.budget = cfg.budget;
  b.comm_enabled = cfg.policy.comm_enabled;
  b.training = training;
  if (!cfg.curriculum_enabled()) {
    b.gate_forced_open = cfg.gate_fixed_open();
    b.shaping_mode = EnforcerMode::None;
    b.hard_masking = false;
    b.penalty_lambda = 0.0;
    // Message dropout belongs to the gate curriculum's early phases; baseline
    // runs without a curriculum train without it.
    b.dropout_rate = 0.0;
    return b;
  }
  Phase phase = ctl.phase();
  b.gate_forced_open = gate_forced_open(phase);
  b.shaping_mode = training ? ctl.active_enforcer() : EnforcerMode::None;
  EnforcerMode effective = ctl.active_enforcer();
  b.hard_masking = effective == EnforcerMode::Hard;
  b.penalty_lambda = cfg.budget.lambda_outer;
  b.pid_r_d = pid.r_d;
  b.pid_r_i = pid.r_i;
  bool early_phase = phase == Phase::OpenGate || phase == Phase::MaxCommReward;
  b.dropout_rate = training && early_phase ? cfg.policy.dropout_rate : 0.0;
  return b;
}

}  // namespace

RunResult run_training(const ExperimentConfig& cfg, uint64_t seed,
                       const std::string& run_dir, const std::string& resume_checkpoint) {
  cfg.validate();
  fs::create_directories(run_dir);
  fs::create_directories(run_dir + "/checkpoints");

  {
    json snapshot = cfg.to_json();
    snapshot["seed"] = seed;
    std::ofstream out(run_dir + "/config.json");
    out << snapshot.dump(2) << "\n";
  }

  auto probe_env = cfg.env.instantiate();
  const DecPomdpSpec& spec = probe_env->spec();

  PolicyConfig pcfg = cfg.policy;
  pcfg.obs_dim = spec.obs_dim;
  pcfg.n_actions = spec.n_actions;
  pcfg.discrete = cfg.discrete_messages();

  PolicyParams params;
  OptimizerState opt;
  opt.alpha = cfg.train.rms_alpha;
  opt.eps = cfg.train.rms_eps;
  double lr = cfg.train.lr;
  EpochCommStats pid;
  PhaseCriteria criteria = cfg.curriculum;
  criteria.reward_based = !cfg.env.is_tj();
  EnforcerMode terminal = cfg.mode == RunMode::Enforcer ? cfg.budget.mode
                                                        : EnforcerMode::None;
  CurriculumController controller(criteria, cfg.budget, terminal,
                                  cfg.curriculum_enabled());
  int start_epoch = 0;

  if (!resume_checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(resume_checkpoint);
    if (ck.params.cfg.obs_dim != pcfg.obs_dim || ck.params.cfg.n_actions != pcfg.n_actions)
      throw EvalError("checkpoint does not match the configured environment");
    params = ck.params;
    opt.v = ck.opt.v;
    lr = ck.meta.lr;
    pid = ck.meta.pid;
    controller.restore(ck.meta.phase, ck.meta.last_active, ck.meta.epochs_in_phase,
                       ck.meta.tapers_done);
    start_epoch = ck.meta.epoch;
  } else {
    Rng init_rng = Rng(seed).fork(0x7A);
    params = PolicyParams::init(pcfg, init_rng);
    opt.attach(params.parameters());
  }
  if (opt.v.empty()) opt.attach(params.parameters());

  std::ofstream metrics(run_dir + "/metrics.jsonl",
                        resume_checkpoint.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw ConfigError("cannot open metrics file in " + run_dir);

  // Traffic-density ramp (TJ): train at an easier arrival rate first and
  // raise it as the policy clears the success bar, IC3Net-style.
  double target_rate = cfg.env.is_tj() ? cfg.env.tj_config().p_arrive : -1.0;
  bool ramp_enabled = cfg.env.is_tj() && cfg.train.env_ramp_start > 0.0 &&
                      cfg.train.env_ramp_start < target_rate;
  double current_rate = ramp_enabled ? cfg.train.env_ramp_start : target_rate;
  if (!resume_checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(resume_checkpoint);
    if (ck.meta.env_rate > 0.0) current_rate = ck.meta.env_rate;
  }
  std::deque<double> ramp_successes;

  auto save = [&](const std::string& path, int epoch) {
    CheckpointMeta meta;
    meta.env_rate = current_rate;
    meta.epoch = epoch;
    meta.lr = lr;
    meta.phase = controller.phase();
    meta.last_active = controller.last_active();
    meta.epochs_in_phase = controller.epochs_in_phase();
    meta.tapers_done = controller.tapers_done();
    meta.pid = pid;
    meta.mode = cfg.mode;
    meta.env_tag = cfg.env.tag;
    meta.seed = seed;
    meta.budget_b = cfg.budget.b;
    save_checkpoint(path, params, opt, meta);
  };

  RunResult result;
  result.run_dir = run_dir;
  save(run_dir + "/checkpoints/epoch_000000.json", start_epoch);

  int epoch = start_epoch;
  try {
    for (; epoch < cfg.train.epochs; ++epoch) {
      auto t0 = std::chrono::steady_clock::now();
      Phase phase_now = controller.phase();
      RunBehavior behavior = make_behavior(cfg, controller, pid, true);

      EnvConfig epoch_env = cfg.env;
      if (cfg.env.is_tj()) epoch_env.p_arrive = current_rate;
      auto trajs = collect_rollouts(params, epoch_env, behavior, cfg.train, seed, epoch);
      EpochStats stats = summarize_epoch(trajs);

      // Epoch-level PID bookkeeping (soft enforcer active only).
      bool soft_active = cfg.curriculum_enabled() &&
                         controller.active_enforcer() == EnforcerMode::Soft;
      if (soft_active) {
        pid.c = stats.c;
        pid.c_star = stats.c_star;
        pid.c_hard = stats.c_hard;
        pid.r_p = soft_p_term(cfg.budget.b, stats.c, cfg.budget.p_mode);
        pid.r_d = soft_d_term(pid.r_p, pid.r_p_prev);
        pid.r_i = soft_i_term(pid, pid.r_p, cfg.budget.clamp_k);
        pid.r_p_prev = pid.r_p;
      }

      opt.lr = lr;
      std::vector<std::vector<const Trajectory*>> groups(
          static_cast<size_t>(cfg.train.mini_updates));
      for (size_t e = 0; e < trajs.size(); ++e)
        groups[e % groups.size()].push_back(&trajs[e]);
      double loss_sum = 0.0, gn_sum = 0.0;
      int updates = 0;
      for (auto& g : groups) {
        if (g.empty()) continue;
        UpdateStats us = reinforce_update(g, params, opt, cfg.train, behavior,
                                          spec.gamma);
        loss_sum += us.loss;
        gn_sum += us.grad_norm;
        updates += 1;
      }
      stats.loss = updates ? loss_sum / updates : 0.0;
      stats.grad_norm = updates ? gn_sum / updates : 0.0;

      auto t1 = std::chrono::steady_clock::now();
      double wall_ms =
          std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() / 1000.0;

      json line = {{"epoch", epoch},
                   {"phase", cfg.curriculum_enabled() || cfg.gate_fixed_open()
                                 ? phase_name(phase_now)
                                 : "GatedFree"},
                   {"env", cfg.env.tag},
                   {"success_rate", stats.success_rate},
                   {"mean_reward", stats.mean_reward},
                   {"c", stats.c},
                   {"c_star", stats.c_star},
                   {"c_hard", stats.c_hard},
                   {"R_P", pid.r_p},
                   {"R_D", pid.r_d},
                   {"R_I", pid.r_i},
                   {"lr", lr},
                   {"p_arrive", current_rate},
                   {"wall_ms", wall_ms},
                   {"episodes", stats.episodes},
                   {"collisions", stats.mean_collisions},
                   {"loss", stats.loss},
                   {"grad_norm", stats.grad_norm}};
      metrics << line.dump() << "\n";
      metrics.flush();

      bool ramp_done = !ramp_enabled || current_rate >= target_rate - 1e-12;
      if (!ramp_done) {
        ramp_successes.push_back(stats.success_rate);
        if (static_cast<int>(ramp_successes.size()) > cfg.train.env_ramp_window)
          ramp_successes.pop_front();
        if (static_cast<int>(ramp_successes.size()) == cfg.train.env_ramp_window) {
          double mean = 0.0;
          for (double s : ramp_successes) mean += s;
          mean /= ramp_successes.size();
          if (mean >= cfg.train.env_ramp_threshold) {
            current_rate = std::min(target_rate, current_rate + cfg.train.env_ramp_step);
            ramp_successes.clear();
            if (current_rate >= target_rate - 1e-12) controller.reset_window();
          }
        }
      }

      CurriculumController::EpochObservation obs;
      obs.success = stats.success_rate;
      obs.mean_reward = stats.mean_reward;
      obs.c = stats.c;
      obs.c_hard = stats.c_hard;
      bool transitioned = controller.observe_epoch(obs, lr, ramp_done);
      if (transitioned) {
        if (controller.phase() == Phase::SoftEnforce) pid = EpochCommStats{};
        char buf[64];
        std::snprintf(buf, sizeof(buf), "/checkpoints/phase_%s_%06d.json",
                      phase_name(controller.phase()).c_str(), epoch + 1);
        save(run_dir + buf, epoch + 1);
      } else if ((epoch + 1) % cfg.train.checkpoint_every == 0) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "/checkpoints/epoch_%06d.json", epoch + 1);
        save(run_dir + buf, epoch + 1);
      }

      result.last_stats = stats;
      result.epochs_run = epoch + 1 - start_epoch;
      if (controller.phase() == Phase::Done) {
        epoch += 1;
        break;
      }
    }
  } catch (...) {
    metrics.flush();
    throw;
  }

  result.final_phase = controller.phase();
  result.final_checkpoint = run_dir + "/checkpoint_final.json";
  save(result.final_checkpoint, epoch);
  return result;
}

}  // namespace commgate
