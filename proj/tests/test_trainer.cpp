#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "commgate/evaluate.hpp"
#include "commgate/serialize.hpp"
#include "commgate/trainer.hpp"

using namespace commgate;

namespace {

Trajectory toy_traj(std::vector<double> rewards) {
  Trajectory t;
  t.n_agents = 1;
  t.length = static_cast<int>(rewards.size());
  t.acted.assign(rewards.size(), 1);
  t.env_reward = rewards;
  t.shaping.assign(rewards.size(), 0.0);
  t.value.assign(rewards.size(), 0.0);
  return t;
}

ExperimentConfig tiny_pp_config() {
  ExperimentConfig cfg;
  cfg.env.tag = "pp-5x5";
  cfg.env.grid = 3;
  cfg.env.n_predators = 2;
  cfg.env.max_steps = 3;
  cfg.mode = RunMode::GatedProto;
  cfg.policy.hidden = 8;
  cfg.policy.msg_dim = 3;
  cfg.policy.n_protos = 4;
  cfg.train.workers = 1;
  cfg.train.batch_steps = 6;
  cfg.train.mini_updates = 1;
  cfg.train.epochs = 2;
  cfg.seeds = {1};
  return cfg;
}

}  // namespace

TEST_CASE("compute_returns") {
  SUBCASE("gamma 1 sums the tail") {
    auto t = toy_traj({1, 1, 1});
    CHECK(compute_returns(t, 1.0) == std::vector<double>{3, 2, 1});
  }
  SUBCASE("gamma 0 is instantaneous") {
    auto t = toy_traj({2, -1, 4});
    CHECK(compute_returns(t, 0.0) == std::vector<double>{2, -1, 4});
  }
  SUBCASE("zero rewards give zero returns") {
    auto t = toy_traj({0, 0, 0});
    CHECK(compute_returns(t, 0.9) == std::vector<double>{0, 0, 0});
  }
  SUBCASE("return chains break across a slot gap") {
    Trajectory t;
    t.n_agents = 1;
    t.length = 4;
    t.acted = {1, 0, 1, 1};  // two different units in the same slot
    t.env_reward = {5, 100, 1, 1};
    t.shaping.assign(4, 0.0);
    auto r = compute_returns(t, 1.0);
    CHECK(r[0] == 5);  // does not absorb the later unit's rewards
    CHECK(r[2] == 2);
    CHECK(r[3] == 1);
    CHECK(r[1] == 0);  // nobody acted: no return
  }
}

TEST_CASE("rollout quota arithmetic") {
  ExperimentConfig cfg;
  cfg.env.tag = "tj-easy";
  cfg.train.workers = 1;
  cfg.train.batch_steps = 40;  // T = 20: exactly two episodes
  RunBehavior behavior;
  behavior.budget = cfg.budget;
  Rng rng(3);
  PolicyConfig pcfg = cfg.policy;
  auto env = cfg.env.instantiate();
  pcfg.obs_dim = env->spec().obs_dim;
  pcfg.n_actions = env->spec().n_actions;
  Rng init(5);
  auto params = PolicyParams::init(pcfg, init);
  auto trajs = collect_rollouts(params, cfg.env, behavior, cfg.train, 7, 0);
  CHECK(trajs.size() == 2);
  CHECK(trajs[0].length == 20);
  CHECK(trajs[1].length == 20);
}

TEST_CASE("rollouts are deterministic given the seed") {
  ExperimentConfig cfg = tiny_pp_config();
  auto env = cfg.env.instantiate();
  PolicyConfig pcfg = cfg.policy;
  pcfg.obs_dim = env->spec().obs_dim;
  pcfg.n_actions = env->spec().n_actions;
  pcfg.discrete = true;
  Rng init(5);
  auto params = PolicyParams::init(pcfg, init);
  RunBehavior behavior;
  behavior.gate_forced_open = false;
  behavior.budget = cfg.budget;

  auto a = collect_rollouts(params, cfg.env, behavior, cfg.train, 42, 0);
  auto b = collect_rollouts(params, cfg.env, behavior, cfg.train, 42, 0);
  REQUIRE(a.size() == b.size());
  for (size_t e = 0; e < a.size(); ++e) {
    CHECK(a[e].action == b[e].action);
    CHECK(a[e].env_reward == b[e].env_reward);
    CHECK(a[e].delivered == b[e].delivered);
    CHECK(a[e].value == b[e].value);
  }
}

TEST_CASE("open gate: every alive step delivers") {
  ExperimentConfig cfg = tiny_pp_config();
  auto env = cfg.env.instantiate();
  PolicyConfig pcfg = cfg.policy;
  pcfg.obs_dim = env->spec().obs_dim;
  pcfg.n_actions = env->spec().n_actions;
  Rng init(6);
  auto params = PolicyParams::init(pcfg, init);
  RunBehavior behavior;
  behavior.gate_forced_open = true;
  behavior.budget = cfg.budget;
  auto trajs = collect_rollouts(params, cfg.env, behavior, cfg.train, 11, 0);
  for (const auto& t : trajs) {
    CHECK(t.alive_steps == t.comm_delivered);
    CHECK(t.ep_c == doctest::Approx(1.0));
  }
}

TEST_CASE("reward decomposition identity and comm stats recomputation") {
  ExperimentConfig cfg = tiny_pp_config();
  auto env = cfg.env.instantiate();
  PolicyConfig pcfg = cfg.policy;
  pcfg.obs_dim = env->spec().obs_dim;
  pcfg.n_actions = env->spec().n_actions;
  Rng init(8);
  auto params = PolicyParams::init(pcfg, init);
  RunBehavior behavior;
  behavior.gate_forced_open = false;
  behavior.shaping_mode = EnforcerMode::CommMax;
  behavior.penalty_lambda = 0.1;
  behavior.budget = cfg.budget;
  auto trajs = collect_rollouts(params, cfg.env, behavior, cfg.train, 13, 0);

  long long delivered = 0, attempted = 0, alive = 0;
  for (const auto& t : trajs) {
    // Shaping is exactly -penalty on acted steps, zero elsewhere.
    for (int tt = 0; tt < t.length; ++tt)
      for (int i = 0; i < t.n_agents; ++i) {
        int k = t.idx(tt, i);
        double expected = t.acted[k] ? -t.penalty : 0.0;
        CHECK(t.shaping[k] == doctest::Approx(expected));
      }
    // Recompute comm fractions from the raw flags.
    long long d = 0, a = 0, al = 0;
    for (size_t k = 0; k < t.acted.size(); ++k) {
      al += t.acted[k];
      d += t.delivered[k];
      a += t.attempt[k];
    }
    CHECK(al == t.alive_steps);
    CHECK(d == t.comm_delivered);
    CHECK(a == t.comm_attempted);
    CHECK(t.penalty ==
          doctest::Approx(0.1 * std::fabs(1.0 - static_cast<double>(d) / al)));
    delivered += d;
    attempted += a;
    alive += al;
  }
  EpochStats stats = summarize_epoch(trajs);
  CHECK(stats.c == doctest::Approx(static_cast<double>(delivered) / alive));
  CHECK(stats.c_star == doctest::Approx(static_cast<double>(attempted) / alive));
}

TEST_CASE("gradient of the full REINFORCE loss matches finite differences") {
  // 2 agents, 3 steps, hidden size 8, continuous messages: every non-sampled
  // path (encoder, LSTM, gate/action/value heads, message channel,
  // aggregation, dropout) is differentiable end to end. The straight-through
  // estimator is a sampled discrete path: its forward emits a hard codebook
  // row on purpose, so it is checked at the op level instead.
  ExperimentConfig cfg = tiny_pp_config();
  auto env = cfg.env.instantiate();
  PolicyConfig pcfg = cfg.policy;
  pcfg.obs_dim = env->spec().obs_dim;
  pcfg.n_actions = env->spec().n_actions;
  pcfg.discrete = false;
  Rng init(9);
  auto params = PolicyParams::init(pcfg, init);
  RunBehavior behavior;
  behavior.gate_forced_open = false;
  behavior.budget = cfg.budget;
  behavior.dropout_rate = 0.1;  // exercise the dropout replay path too

  TrainConfig tc = cfg.train;
  auto trajs = collect_rollouts(params, cfg.env, behavior, tc, 21, 0);
  REQUIRE(!trajs.empty());
  std::vector<const Trajectory*> batch;
  batch.push_back(&trajs[0]);

  Tape tape;
  auto loss = build_loss(&tape, batch, params, tc, behavior, 1.0);
  tape.backward(loss);
  auto f = [&] {
    Tape scratch;
    return build_loss(&scratch, batch, params, tc, behavior, 1.0)->data[0];
  };
  // Step 3e-4: the composite loss is evaluated to ~1 ulp, so the difference
  // quotient's cancellation noise scales as eps/(2h); 1e-5 would drown
  // near-zero coordinates in that noise.
  double err = finite_diff_check(f, params.parameters(), 3e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("zero advantages kill the policy-gradient term") {
  ExperimentConfig cfg = tiny_pp_config();
  auto env = cfg.env.instantiate();
  PolicyConfig pcfg = cfg.policy;
  pcfg.obs_dim = env->spec().obs_dim;
  pcfg.n_actions = env->spec().n_actions;
  Rng init(10);
  auto params = PolicyParams::init(pcfg, init);
  RunBehavior behavior;
  behavior.gate_forced_open = false;
  behavior.budget = cfg.budget;
  TrainConfig tc = cfg.train;
  tc.value_coef = 0.0;
  tc.entropy_coef = 0.0;
  auto trajs = collect_rollouts(params, cfg.env, behavior, tc, 33, 0);
  Trajectory t = trajs[0];
  // Advantage = G - baseline = 0 when the stored baseline equals the return.
  auto returns = compute_returns(t, 1.0);
  t.value = returns;
  std::vector<const Trajectory*> batch = {&t};
  Tape tape;
  auto loss = build_loss(&tape, batch, params, tc, behavior, 1.0);
  tape.backward(loss);
  for (const auto& p : params.parameters())
    for (double g : p->grad) CHECK(g == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gradient clip bounds the post-clip norm") {
  Rng rng(3);
  auto a = tensor({4}, true, "a");
  auto b = tensor({3}, true, "b");
  for (auto& g : a->grad) g = 10.0;
  for (auto& g : b->grad) g = -7.0;
  double pre = clip_grad_norm({a, b}, 0.5);
  CHECK(pre > 0.5);
  CHECK(grad_norm({a, b}) == doctest::Approx(0.5));
}

TEST_CASE("run_training writes artifacts, is resumable, epochs=0 emits checkpoint") {
  namespace fs = std::filesystem;
  ExperimentConfig cfg = tiny_pp_config();
  std::string dir = (fs::temp_directory_path() / "commgate_test_run").string();
  fs::remove_all(dir);

  SUBCASE("epochs=0: initial checkpoint only") {
    ExperimentConfig c0 = cfg;
    c0.train.epochs = 0;
    RunResult r = run_training(c0, 1, dir + "/zero");
    CHECK(fs::exists(r.final_checkpoint));
    auto metrics = std::ifstream(dir + "/zero/metrics.jsonl");
    std::string line;
    CHECK_FALSE(static_cast<bool>(std::getline(metrics, line)));
  }

  SUBCASE("two epochs, deterministic rerun, resume continues") {
    RunResult r1 = run_training(cfg, 1, dir + "/a");
    RunResult r2 = run_training(cfg, 1, dir + "/b");
    std::ifstream fa(dir + "/a/metrics.jsonl"), fb(dir + "/b/metrics.jsonl");
    std::string sa((std::istreambuf_iterator<char>(fa)), {});
    std::string sb((std::istreambuf_iterator<char>(fb)), {});
    // wall_ms differs; compare everything else line by line.
    auto strip = [](const std::string& text) {
      std::string out;
      std::istringstream ss(text);
      std::string line;
      while (std::getline(ss, line)) {
        auto j = nlohmann::json::parse(line);
        j.erase("wall_ms");
        out += j.dump() + "\n";
      }
      return out;
    };
    CHECK(strip(sa) == strip(sb));

    ExperimentConfig more = cfg;
    more.train.epochs = 3;
    RunResult r3 = run_training(more, 1, dir + "/a_resumed", r1.final_checkpoint);
    CHECK(r3.epochs_run == 1);  // continued from epoch 2 to 3
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  namespace fs = std::filesystem;
  Rng rng(44);
  PolicyConfig pcfg;
  pcfg.obs_dim = 5;
  pcfg.n_actions = 3;
  pcfg.hidden = 6;
  pcfg.msg_dim = 4;
  pcfg.n_protos = 3;
  auto params = PolicyParams::init(pcfg, rng);
  OptimizerState opt;
  opt.attach(params.parameters());
  opt.v[0][0] = 0.123456789012345678;
  CheckpointMeta meta;
  meta.epoch = 7;
  meta.lr = 0.000425;
  meta.phase = Phase::SoftEnforce;
  meta.pid.integral = -0.0375;
  meta.env_tag = "pp-5x5";
  std::string path = (fs::temp_directory_path() / "commgate_ck.json").string();
  save_checkpoint(path, params, opt, meta);
  Checkpoint ck = load_checkpoint(path);
  auto orig = params.parameters();
  auto loaded = ck.params.parameters();
  REQUIRE(orig.size() == loaded.size());
  for (size_t i = 0; i < orig.size(); ++i) CHECK(orig[i]->data == loaded[i]->data);
  CHECK(ck.opt.v == opt.v);
  CHECK(ck.meta.epoch == 7);
  CHECK(ck.meta.lr == 0.000425);
  CHECK(ck.meta.phase == Phase::SoftEnforce);
  CHECK(ck.meta.pid.integral == -0.0375);
}

TEST_CASE("evaluate: discrete checkpoints emit codebook rows only") {
  namespace fs = std::filesystem;
  ExperimentConfig cfg = tiny_pp_config();
  cfg.mode = RunMode::FixedProto;
  std::string dir = (fs::temp_directory_path() / "commgate_eval_run").string();
  fs::remove_all(dir);
  RunResult r = run_training(cfg, 3, dir);
  Checkpoint ck = load_checkpoint(r.final_checkpoint);
  EvalResult ev = evaluate_checkpoint(ck, cfg.env, 20, 5);
  CHECK(ev.episodes == 20);
  CHECK(ev.messages_checked > 0);
  CHECK(ev.messages_bitwise_codebook);
  CHECK(ev.c == doctest::Approx(1.0));  // fixed gate delivers always
  CHECK_THROWS_AS(evaluate_checkpoint(ck, cfg.env, 0, 5), EvalError);
  EnvConfig wrong;
  wrong.tag = "tj-easy";
  CHECK_THROWS_AS(evaluate_checkpoint(ck, wrong, 5, 5), EvalError);
}
