#pragma once

#include <string>

#include "commgate/config.hpp"
#include "commgate/curriculum.hpp"
#include "commgate/optim.hpp"
#include "commgate/policy.hpp"

namespace commgate {

/// Versioned JSON checkpoint: parameter shapes + row-major values, optimizer
/// running averages, and the trainer/curriculum state needed to resume.
struct CheckpointMeta {
  int epoch = 0;
  double lr = 0.001;
  Phase phase = Phase::OpenGate;
  EnforcerMode last_active = EnforcerMode::None;
  int epochs_in_phase = 0;
  int tapers_done = 0;
  EpochCommStats pid;
  RunMode mode = RunMode::FixedCts;
  std::string env_tag;
  uint64_t seed = 0;
  double budget_b = 1.0;  // needed at eval time when hard masking stays active
  double env_rate = -1.0;  // current arrival rate of the difficulty ramp (TJ)
};

struct Checkpoint {
  PolicyParams params;
  OptimizerState opt;
  CheckpointMeta meta;
};

void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const OptimizerState& opt, const CheckpointMeta& meta);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace commgate
