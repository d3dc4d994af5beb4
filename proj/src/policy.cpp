#include "commgate/policy.hpp"

#include <cmath>

#include "commgate/errors.hpp"

namespace commgate {

void PolicyConfig::validate() const {
  if (obs_dim < 1) throw ConfigError("policy.obs_dim must be positive");
  if (n_actions < 2) throw ConfigError("policy.n_actions must be >= 2");
  if (hidden < 1) throw ConfigError("policy.hidden must be positive");
  if (msg_dim < 1) throw ConfigError("policy.msg_dim must be positive");
  if (n_protos < 2) throw ConfigError("policy.n_protos must be >= 2");
  if (proto_tau <= 0.0) throw ConfigError("policy.proto_tau must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("policy.dropout_rate must be in [0, 1)");
}

PolicyParams PolicyParams::init(const PolicyConfig& cfg, Rng& rng) {
  cfg.validate();
  PolicyParams p;
  p.cfg = cfg;
  p.enc_w = tensor({cfg.hidden, cfg.obs_dim}, true, "enc.w");
  p.enc_b = tensor({cfg.hidden}, true, "enc.b");
  init_uniform_fan_in(*p.enc_w, cfg.obs_dim, rng);
  p.lstm = LstmParams::init(cfg.hidden + cfg.msg_dim, cfg.hidden, rng, "lstm");
  p.gate_w = tensor({2, cfg.hidden}, true, "gate.w");
  p.gate_b = tensor({2}, true, "gate.b");
  init_uniform_fan_in(*p.gate_w, cfg.hidden, rng);
  p.msg_w = tensor({cfg.msg_dim, cfg.hidden}, true, "msg.w");
  p.msg_b = tensor({cfg.msg_dim}, true, "msg.b");
  init_uniform_fan_in(*p.msg_w, cfg.hidden, rng);
  p.bank = tensor({cfg.n_protos, cfg.msg_dim}, true, "bank");
  init_uniform_fan_in(*p.bank, cfg.msg_dim, rng);
  p.act_w = tensor({cfg.n_actions, cfg.hidden}, true, "act.w");
  p.act_b = tensor({cfg.n_actions}, true, "act.b");
  init_uniform_fan_in(*p.act_w, cfg.hidden, rng);
  p.val_w = tensor({1, cfg.hidden}, true, "val.w");
  p.val_b = tensor({1}, true, "val.b");
  init_uniform_fan_in(*p.val_w, cfg.hidden, rng);
  return p;
}

std::vector<TensorPtr> PolicyParams::parameters() const {
  return {enc_w, enc_b, lstm.w_input, lstm.w_hidden, lstm.bias, gate_w, gate_b,
          msg_w,  msg_b, bank,         act_w,         act_b,     val_w,  val_b};
}

AgentState AgentState::fresh(const PolicyConfig& cfg) {
  AgentState s;
  s.reset(cfg);
  return s;
}

void AgentState::reset(const PolicyConfig& cfg) {
  h = tensor({cfg.hidden});
  c = tensor({cfg.hidden});
  last_msg = tensor({cfg.msg_dim});
  delivered_last = false;
  alive = false;
}

PolicyStep policy_forward(Tape* tape, const PolicyParams& p, const TensorPtr& obs,
                          const TensorPtr& incoming, const TensorPtr& h,
                          const TensorPtr& c) {
  PolicyStep out;
  auto enc = affine(tape, p.enc_w, p.enc_b, obs);
  auto x = concat(tape, enc, incoming);
  auto [h2, c2] = lstm_step(tape, p.lstm, x, h, c);
  out.h = h2;
  out.c = c2;
  out.gate_logits = affine(tape, p.gate_w, p.gate_b, h2);
  out.pre_msg = affine(tape, p.msg_w, p.msg_b, h2);
  out.action_logits = affine(tape, p.act_w, p.act_b, h2);
  out.value = affine(tape, p.val_w, p.val_b, h2);
  return out;
}

GateDecision gate_sample(const Tensor& gate_logits, Rng& rng, ActMode mode) {
  GateDecision d;
  int pick;
  if (mode == ActMode::Greedy) {
    pick = argmax(gate_logits);
  } else {
    pick = sample_categorical(gate_logits, rng);
  }
  d.attempt = pick == 0 ? 1 : 0;
  d.delivered = d.attempt;
  d.log_prob = log_softmax_at(gate_logits, pick);
  return d;
}

QuantizeResult quantize_message(Tape* tape, const PolicyParams& p,
                                const TensorPtr& pre_msg, Rng& rng, ActMode mode) {
  QuantizeResult out;
  if (!p.cfg.discrete) {
    out.message = pre_msg;
    return out;
  }
  auto logits = distance_logits(tape, pre_msg, p.bank, p.cfg.proto_tau);
  if (mode == ActMode::Greedy) {
    out.proto_index = argmax(*logits);  // nearest prototype
    std::vector<double> zero_noise(static_cast<size_t>(p.cfg.n_protos), 0.0);
    auto w = st_onehot(tape, logits, p.cfg.proto_tau, zero_noise, out.proto_index);
    out.message = rows_combo(tape, p.bank, w);
    return out;
  }
  std::vector<double> noise(static_cast<size_t>(p.cfg.n_protos));
  for (auto& g : noise) g = rng.gumbel();
  int hard = 0;
  double best = logits->data[0] + noise[0];
  for (int k = 1; k < p.cfg.n_protos; ++k) {
    double v = logits->data[k] + noise[k];
    if (v > best) {
      best = v;
      hard = k;
    }
  }
  out.proto_index = hard;
  auto w = st_onehot(tape, logits, p.cfg.proto_tau, noise, hard);
  out.message = rows_combo(tape, p.bank, w);
  return out;
}

QuantizeResult quantize_replay(Tape* tape, const PolicyParams& p,
                               const TensorPtr& pre_msg, int proto_index,
                               const std::vector<double>& noise) {
  QuantizeResult out;
  if (!p.cfg.discrete) {
    out.message = pre_msg;
    return out;
  }
  auto logits = distance_logits(tape, pre_msg, p.bank, p.cfg.proto_tau);
  out.proto_index = proto_index;
  auto w = st_onehot(tape, logits, p.cfg.proto_tau, noise, proto_index);
  out.message = rows_combo(tape, p.bank, w);
  return out;
}

TensorPtr aggregate_incoming(Tape* tape, const std::vector<AgentState>& agents,
                             int receiver, int msg_dim) {
  std::vector<TensorPtr> delivered;
  for (size_t j = 0; j < agents.size(); ++j) {
    if (static_cast<int>(j) == receiver) continue;
    if (!agents[j].alive || !agents[j].delivered_last) continue;
    delivered.push_back(agents[j].last_msg);
  }
  return mean_of(tape, delivered, msg_dim);
}

ActionSample act_and_value(const PolicyStep& step, Rng& rng, ActMode mode) {
  ActionSample s;
  if (mode == ActMode::Greedy)
    s.action = argmax(*step.action_logits);
  else
    s.action = sample_categorical(*step.action_logits, rng);
  s.log_prob = log_softmax_at(*step.action_logits, s.action);
  s.value = step.value->data[0];
  return s;
}

TensorPtr comm_dropout(Tape* tape, const TensorPtr& message, double rate, Rng& rng,
                       bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("comm_dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return message;
  bool drop = rng.bernoulli(rate);
  if (!drop) return message;
  return scale(tape, message, 0.0);
}

}  // namespace commgate
