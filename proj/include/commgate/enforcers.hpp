#pragma once

#include <cstdint>
#include <vector>

#include "commgate/errors.hpp"
#include "commgate/rng.hpp"

namespace commgate {

enum class EnforcerMode { None, CommMax, Soft, Hard };

/// How the proportional term treats over-budget communication. The published
/// piecewise formula goes negative for c > b, which under R = R_env - penalty
/// rewards over-communication; Symmetric flips that branch's sign and is the
/// default. PaperVerbatim keeps the formula as written.
enum class PTermMode { Symmetric, PaperVerbatim };

struct BudgetConfig {
  double b = 0.3;  // budget fraction of alive agent-steps, in (0, 1]
  EnforcerMode mode = EnforcerMode::None;
  double lambda_outer = 1.0;  // R = R_env - lambda_outer * penalty
  double gain_p = 1.0;
  double gain_d = 1.6;
  double gain_i = 0.026;
  double clamp_k = 0.1;
  double epsilon = 0.05;
  double mask_lo = 0.0;  // hard mode: per-episode random mask prob range
  double mask_hi = 0.3;
  PTermMode p_mode = PTermMode::Symmetric;

  void validate() const;
};

/// Epoch-level PID state for the soft enforcer plus the fractions observed
/// in the most recent epoch.
struct EpochCommStats {
  double c = 0.0;       // delivered / alive agent-steps
  double c_star = 0.0;  // attempted / alive agent-steps
  double c_hard = 0.0;  // delivered under hard masking / alive agent-steps
  double r_p = 0.0;
  double r_d = 0.0;
  double r_i = 0.0;
  double r_p_prev = 0.0;
  double integral = 0.0;
};

/// |1 - c|; the phase-2 reward that pushes the learned gate toward full
/// communication.
double comm_max_penalty(double c);

/// Proportional budget error. c <= b: (b-c)/b. c > b: (b-c)/(1-b) verbatim,
/// (c-b)/(1-b) symmetric.
double soft_p_term(double b, double c, PTermMode mode = PTermMode::Symmetric);

/// First difference of the proportional term across epochs.
double soft_d_term(double r_p_now, double r_p_prev);

/// Accumulates r_p_now into stats.integral, clamped to [-k, +k], and returns
/// the clamped value.
double soft_i_term(EpochCommStats& stats, double r_p_now, double k);

/// gain_p * R_P + gain_d * R_D + gain_i * R_I using the stats' stored terms.
double soft_penalty(const EpochCommStats& stats, const BudgetConfig& cfg);

/// |c_hard - c_star|; requires 0 <= c_hard <= c_star <= 1.
double hard_penalty(double c_star, double c_hard);

/// Per-agent per-episode delivery accounting for the hard enforcer. Tokens
/// accrue with the agent's own alive steps: after s alive steps at most
/// floor(b*s) deliveries have happened, so the delivered fraction can never
/// exceed b, for any attempt pattern and any alive span.
class TokenBucket {
 public:
  TokenBucket(double b, int max_steps);

  /// Call once per alive step before any attempt that step.
  void on_alive_step() { ++alive_steps_; }

  /// True (and consumes a token) iff a delivery is still within budget.
  bool try_deliver();

  int delivered() const { return delivered_; }
  int alive_steps() const { return alive_steps_; }
  /// Upper bound over a full-length episode: floor(b * T).
  int capacity() const { return capacity_; }

 private:
  double b_;
  int capacity_;
  int alive_steps_ = 0;
  int delivered_ = 0;
};

/// Batch form over one agent's episode: applies the token bucket to a
/// sequence of per-step attempts plus, during training, random masking with a
/// probability drawn once per episode from [mask_lo, mask_hi]. Returns the
/// delivered flags.
std::vector<uint8_t> hard_mask(const std::vector<uint8_t>& attempts, double b,
                               int max_steps, double mask_lo, double mask_hi,
                               Rng& rng, bool training);

}  // namespace commgate
