#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "commgate/env.hpp"

namespace commgate {

/// Exact search over deterministic symmetric no-communication policies on a
/// blind traffic junction. Because agents are blind, a deterministic shared
/// policy makes every car on a route replay the same action sequence relative
/// to its arrival, so the policy class is enumerated as per-route action
/// sequences realizable with `history` steps of observation memory; each
/// candidate is evaluated exactly by expectation over the arrival process with
/// transposition-table memoization on canonical (time, car ages) states.
struct OracleConfig {
  TrafficJunctionConfig env;  // blind TJ only
  int history = 2;            // own-observation window; >= max_steps removes the limit
  uint64_t max_nodes = 50000000;   // expectimax expansion cap (exact if within)
  uint64_t max_policies = 200000;  // policy-pair enumeration cap

  void validate() const;
};

struct OracleResult {
  double success = 0.0;
  double collision_rate = 0.0;  // 1 - success
  double b_lb = 0.0;            // lower bound on an optimal comm budget
  std::vector<std::string> policy;  // best per-route action strings, G/B
  uint64_t states_expanded = 0;
  uint64_t cache_hits = 0;
  uint64_t policies_evaluated = 0;

  nlohmann::json to_json() const;
};

/// Exact within the caps; throws ConfigError("instance too large ...") when a
/// cap is exceeded rather than approximating silently.
OracleResult solve(const OracleConfig& cfg);

/// Memoized and non-memoized searches must agree exactly on tiny instances.
bool verify_memoization(const OracleConfig& cfg);

/// Exact expected success of one fixed per-route action-sequence policy.
double evaluate_policy(const OracleConfig& cfg,
                       const std::vector<std::string>& per_route_actions);

}  // namespace commgate
