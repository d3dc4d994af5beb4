#include "commgate/enforcers.hpp"

#include <algorithm>
#include <cmath>

namespace commgate {

void BudgetConfig::validate() const {
  if (!(b > 0.0 && b <= 1.0)) throw ConfigError("budget.b must be in (0, 1]");
  if (clamp_k <= 0.0) throw ConfigError("budget.clamp_k must be positive");
  if (epsilon <= 0.0) throw ConfigError("budget.epsilon must be positive");
  if (gain_p < 0.0 || gain_d < 0.0 || gain_i < 0.0)
    throw ConfigError("budget gains must be nonnegative");
  if (mask_lo < 0.0 || mask_hi < mask_lo || mask_hi >= 1.0)
    throw ConfigError("budget.mask range must satisfy 0 <= lo <= hi < 1");
  if (lambda_outer < 0.0) throw ConfigError("budget.lambda_outer must be nonnegative");
}

double comm_max_penalty(double c) {
  if (c < 0.0 || c > 1.0) throw ContractViolation("comm_max_penalty: c outside [0, 1]");
  return std::fabs(1.0 - c);
}

double soft_p_term(double b, double c, PTermMode mode) {
  if (!(b > 0.0 && b < 1.0))
    throw ConfigError("soft_p_term: b must be strictly inside (0, 1)");
  if (c < 0.0 || c > 1.0) throw ContractViolation("soft_p_term: c outside [0, 1]");
  if (c <= b) return (b - c) / b;
  if (mode == PTermMode::PaperVerbatim) return (b - c) / (1.0 - b);
  return (c - b) / (1.0 - b);
}

double soft_d_term(double r_p_now, double r_p_prev) { return r_p_now - r_p_prev; }

double soft_i_term(EpochCommStats& stats, double r_p_now, double k) {
  if (k <= 0.0) throw ConfigError("soft_i_term: clamp K must be positive");
  stats.integral = std::clamp(stats.integral + r_p_now, -k, k);
  return stats.integral;
}

double soft_penalty(const EpochCommStats& stats, const BudgetConfig& cfg) {
  return cfg.gain_p * stats.r_p + cfg.gain_d * stats.r_d + cfg.gain_i * stats.r_i;
}

double hard_penalty(double c_star, double c_hard) {
  if (c_star < 0.0 || c_star > 1.0 || c_hard < 0.0 || c_hard > c_star)
    throw ContractViolation("hard_penalty: requires 0 <= c_hard <= c_star <= 1");
  return std::fabs(c_hard - c_star);
}

TokenBucket::TokenBucket(double b, int max_steps) : b_(b) {
  if (!(b > 0.0 && b <= 1.0)) throw ConfigError("TokenBucket: b must be in (0, 1]");
  if (max_steps < 1) throw ConfigError("TokenBucket: max_steps must be >= 1");
  capacity_ = static_cast<int>(std::floor(b * max_steps + 1e-9));
}

bool TokenBucket::try_deliver() {
  int allowed = static_cast<int>(std::floor(b_ * alive_steps_ + 1e-9));
  if (delivered_ < allowed) {
    ++delivered_;
    return true;
  }
  return false;
}

std::vector<uint8_t> hard_mask(const std::vector<uint8_t>& attempts, double b,
                               int max_steps, double mask_lo, double mask_hi,
                               Rng& rng, bool training) {
  TokenBucket bucket(b, max_steps);
  double mask_p = training ? rng.uniform(mask_lo, mask_hi) : 0.0;
  std::vector<uint8_t> delivered(attempts.size(), 0);
  for (size_t t = 0; t < attempts.size(); ++t) {
    bucket.on_alive_step();
    if (!attempts[t]) continue;
    if (!bucket.try_deliver()) continue;
    // The token is spent even when the random mask then drops the message;
    // masking varies training, it does not refund budget.
    if (training && rng.bernoulli(mask_p)) continue;
    delivered[t] = 1;
  }
  return delivered;
}

}  // namespace commgate
