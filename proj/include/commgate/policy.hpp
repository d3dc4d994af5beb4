#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "commgate/rng.hpp"
#include "commgate/tensor.hpp"

namespace commgate {

enum class ActMode { Train, Greedy };

struct PolicyConfig {
  int obs_dim = 0;
  int n_actions = 0;
  int hidden = 64;
  int msg_dim = 32;        // d_p: message / prototype dimension
  int n_protos = 28;       // N_p: codebook size
  double proto_tau = 1.0;  // quantization temperature
  bool discrete = true;    // false: continuous messages (prototype layer bypassed)
  bool comm_enabled = true;
  double dropout_rate = 0.1;

  void validate() const;
};

/// One parameter set shared by all agents (homogeneous policies).
struct PolicyParams {
  PolicyConfig cfg;
  TensorPtr enc_w, enc_b;   // obs -> hidden
  LstmParams lstm;          // [enc(obs) ; incoming] -> hidden
  TensorPtr gate_w, gate_b; // hidden -> 2 logits (0 = communicate, 1 = silent)
  TensorPtr msg_w, msg_b;   // hidden -> msg_dim pre-message
  TensorPtr bank;           // [n_protos, msg_dim] codebook
  TensorPtr act_w, act_b;   // hidden -> n_actions
  TensorPtr val_w, val_b;   // hidden -> 1 baseline

  static PolicyParams init(const PolicyConfig& cfg, Rng& rng);
  std::vector<TensorPtr> parameters() const;
};

/// Per-agent recurrent carry. Zeroed on episode reset and on agent death.
struct AgentState {
  TensorPtr h, c;
  TensorPtr last_msg;       // message emitted last step (post dropout)
  bool delivered_last = false;
  bool alive = false;

  static AgentState fresh(const PolicyConfig& cfg);
  void reset(const PolicyConfig& cfg);
};

struct GateDecision {
  int attempt = 0;    // gate output
  int delivered = 0;  // after enforcer masking; delivered implies attempt
  double log_prob = 0.0;
  bool forced = false;  // open-gate phase: no sampling happened
};

/// Per-step head outputs (taped when a tape is supplied).
struct PolicyStep {
  TensorPtr h, c;
  TensorPtr gate_logits;
  TensorPtr pre_msg;
  TensorPtr action_logits;
  TensorPtr value;
};

/// Encoder + LSTM + heads over [enc(obs) ; incoming].
PolicyStep policy_forward(Tape* tape, const PolicyParams& p, const TensorPtr& obs,
                          const TensorPtr& incoming, const TensorPtr& h,
                          const TensorPtr& c);

/// Samples (Train) or argmaxes (Greedy) the communicate/silent decision.
/// Does not apply enforcer masking; `delivered` starts equal to `attempt`.
GateDecision gate_sample(const Tensor& gate_logits, Rng& rng, ActMode mode);

/// Quantizes the pre-message onto the codebook. Train mode draws Gumbel noise
/// from `rng` and returns the straight-through one-hot selection; Greedy picks
/// the nearest prototype. In continuous mode returns the pre-message as-is.
struct QuantizeResult {
  TensorPtr message;
  int proto_index = -1;  // -1 in continuous mode
};
QuantizeResult quantize_message(Tape* tape, const PolicyParams& p,
                                const TensorPtr& pre_msg, Rng& rng, ActMode mode);

/// Replay variant: reuses the stored prototype index and the same Gumbel
/// noise stream so gradients follow the rollout's selection.
QuantizeResult quantize_replay(Tape* tape, const PolicyParams& p,
                               const TensorPtr& pre_msg, int proto_index,
                               const std::vector<double>& noise);

/// Mean of delivered messages from alive senders other than the receiver;
/// zero vector when nobody delivered.
TensorPtr aggregate_incoming(Tape* tape, const std::vector<AgentState>& agents,
                             int receiver, int msg_dim);

struct ActionSample {
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
};
ActionSample act_and_value(const PolicyStep& step, Rng& rng, ActMode mode);

/// Zeroes the whole vector with probability `rate` during training; identity
/// otherwise. No rescaling: messages are codebook symbols.
TensorPtr comm_dropout(Tape* tape, const TensorPtr& message, double rate, Rng& rng,
                       bool training);

}  // namespace commgate
