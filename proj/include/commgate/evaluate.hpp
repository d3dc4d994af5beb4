#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "commgate/serialize.hpp"
#include "commgate/trainer.hpp"

namespace commgate {

struct EvalResult {
  int episodes = 0;
  double success_rate = 0.0;
  double mean_reward = 0.0;
  double c = 0.0, c_star = 0.0, c_hard = 0.0;
  std::vector<long long> proto_hist;  // delivered-message usage per prototype
  int distinct_protos = 0;
  int messages_checked = 0;
  bool messages_bitwise_codebook = true;  // trivially true in continuous mode
  bool hard_masked = false;

  nlohmann::json to_json() const;
};

/// Behavioral flags an evaluation of this checkpoint should use: the gate is
/// forced open for fixed modes (and an unfinished OpenGate phase); hard
/// masking stays active when the checkpoint's enforcement route ended hard.
RunBehavior eval_behavior(const Checkpoint& ck);

/// Greedy evaluation over `episodes` fresh episodes. Fails with EvalError on
/// zero episodes or env/checkpoint mismatch.
EvalResult evaluate_checkpoint(const Checkpoint& ck, const EnvConfig& env_cfg,
                               int episodes, uint64_t seed);

}  // namespace commgate
