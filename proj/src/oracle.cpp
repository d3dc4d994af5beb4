#include "commgate/oracle.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <unordered_map>

namespace commgate {

using nlohmann::json;

void OracleConfig::validate() const {
  env.validate();
  if (history < 0) throw ConfigError("oracle.history must be >= 0");
  if (env.routes.size() != 2)
    throw ConfigError("oracle: only two-route blind junctions are supported");
}

json OracleResult::to_json() const {
  return json{{"success", success},
              {"collision_rate", collision_rate},
              {"b_lb", b_lb},
              {"policy", policy},
              {"states_expanded", states_expanded},
              {"cache_hits", cache_hits},
              {"policies_evaluated", policies_evaluated}};
}

namespace {

constexpr char kGasChar = 'G';
constexpr char kBrakeChar = 'B';

/// All per-route action sequences a deterministic policy with an
/// h-observation window can realize, deduplicated. An observation here is the
/// (position, previous action) pair a blind car can see about itself.
std::vector<std::string> realizable_sequences(const TrafficJunctionConfig& cfg,
                                              int route, int history,
                                              uint64_t cap) {
  int route_len = static_cast<int>(cfg.routes[route].size());
  int horizon = cfg.max_steps;
  std::set<std::string> seqs;

  using Window = std::vector<std::pair<int, int>>;  // (pos, prev_action)
  std::map<Window, char> table;
  std::string alpha;

  // Unlimited history: keys never repeat, so this enumerates every sequence.
  bool unlimited = history >= horizon;

  std::function<void(int, int, Window&)> rec = [&](int age, int pos, Window& window) {
    if (pos >= route_len || age >= horizon) {
      std::string padded = alpha;
      padded.resize(static_cast<size_t>(horizon), kBrakeChar);
      seqs.insert(padded);
      if (seqs.size() > cap)
        throw ConfigError("instance too large: policy enumeration exceeded cap");
      return;
    }
    auto apply = [&](char a) {
      alpha.push_back(a);
      int npos = pos + (a == kGasChar ? 1 : 0);
      Window next = window;
      next.emplace_back(npos, a == kGasChar ? 0 : 1);
      if (!unlimited && static_cast<int>(next.size()) > history)
        next.erase(next.begin());
      rec(age + 1, npos, next);
      alpha.pop_back();
    };
    if (!unlimited) {
      auto it = table.find(window);
      if (it != table.end()) {
        apply(it->second);
        return;
      }
      for (char a : {kGasChar, kBrakeChar}) {
        table[window] = a;
        apply(a);
        table.erase(window);
      }
      return;
    }
    apply(kGasChar);
    apply(kBrakeChar);
  };

  Window w0 = {{0, -1}};
  rec(0, 0, w0);
  return {seqs.begin(), seqs.end()};
}

struct PolicyEval {
  const TrafficJunctionConfig* cfg = nullptr;
  // positions[r][k]: cell index after k actions of route r's sequence, or -1
  // once the car has exited.
  std::vector<std::vector<int>> positions;
  int horizon = 0;
  bool memoize = true;
  uint64_t max_nodes = 0;
  uint64_t nodes = 0;
  uint64_t hits = 0;

  struct KeyHash {
    size_t operator()(const std::vector<int>& key) const {
      size_t h = 1469598103934665603ULL;
      for (int v : key) {
        h ^= static_cast<size_t>(v) + 0x9E3779B9;
        h *= 1099511628211ULL;
      }
      return h;
    }
  };
  std::unordered_map<std::vector<int>, double, KeyHash> memo;

  void prepare(const std::vector<std::string>& seqs) {
    positions.clear();
    for (size_t r = 0; r < seqs.size(); ++r) {
      int route_len = static_cast<int>(cfg->routes[r].size());
      std::vector<int> pos;
      int p = 0;
      pos.push_back(cfg->routes[r][0]);
      for (char a : seqs[r]) {
        if (a == kGasChar) p += 1;
        if (p >= route_len) {
          pos.push_back(-1);
          break;
        }
        pos.push_back(cfg->routes[r][p]);
      }
      positions.push_back(std::move(pos));
    }
  }

  int cell_of(int route, int age) const {
    const auto& pos = positions[static_cast<size_t>(route)];
    if (age >= static_cast<int>(pos.size())) return -1;
    return pos[static_cast<size_t>(age)];
  }

  // Cars are (route, age) pairs, canonically sorted.
  double value(int t, std::vector<std::pair<int, int>> cars) {
    if (t >= horizon) return 1.0;
    nodes += 1;
    if (nodes > max_nodes)
      throw ConfigError("instance too large: expectimax exceeded node cap");
    std::vector<int> key;
    if (memoize) {
      key.reserve(cars.size() * 2 + 1);
      key.push_back(t);
      for (auto [r, a] : cars) {
        key.push_back(r);
        key.push_back(a);
      }
      auto it = memo.find(key);
      if (it != memo.end()) {
        hits += 1;
        return it->second;
      }
    }

    int active_at_start = static_cast<int>(cars.size());

    // Move phase: everyone ages one action; exited cars drop out.
    std::vector<std::pair<int, int>> moved;
    moved.reserve(cars.size());
    for (auto [r, a] : cars)
      if (cell_of(r, a + 1) >= 0) moved.emplace_back(r, a + 1);

    double total = 0.0;
    double p = cfg->p_arrive;
    int n_routes = static_cast<int>(cfg->routes.size());
    for (int want = 0; want < (1 << n_routes); ++want) {
      double prob = 1.0;
      for (int r = 0; r < n_routes; ++r)
        prob *= (want >> r & 1) ? p : (1.0 - p);
      if (prob == 0.0) continue;

      auto next = moved;
      int spawned = 0;
      for (int r = 0; r < n_routes; ++r) {
        if (!(want >> r & 1)) continue;
        if (active_at_start + spawned >= cfg->n_max) continue;
        next.emplace_back(r, 0);
        spawned += 1;
      }

      bool collision = false;
      std::map<int, int> occupancy;
      for (auto [r, a] : next)
        if (++occupancy[cell_of(r, a)] >= 2) collision = true;
      if (collision) continue;  // contributes 0

      std::sort(next.begin(), next.end());
      total += prob * value(t + 1, std::move(next));
    }
    if (memoize) memo.emplace(std::move(key), total);
    return total;
  }

  double run() {
    memo.clear();
    // Reset arrivals: same process, empty road, no collision possible.
    double total = 0.0;
    double p = cfg->p_arrive;
    int n_routes = static_cast<int>(cfg->routes.size());
    for (int want = 0; want < (1 << n_routes); ++want) {
      double prob = 1.0;
      for (int r = 0; r < n_routes; ++r)
        prob *= (want >> r & 1) ? p : (1.0 - p);
      if (prob == 0.0) continue;
      std::vector<std::pair<int, int>> cars;
      int spawned = 0;
      for (int r = 0; r < n_routes; ++r) {
        if (!(want >> r & 1)) continue;
        if (spawned >= cfg->n_max) continue;
        cars.emplace_back(r, 0);
        spawned += 1;
      }
      total += prob * value(0, std::move(cars));
    }
    return total;
  }
};

}  // namespace

double evaluate_policy(const OracleConfig& cfg,
                       const std::vector<std::string>& per_route_actions) {
  cfg.validate();
  PolicyEval eval;
  eval.cfg = &cfg.env;
  eval.horizon = cfg.env.max_steps;
  eval.max_nodes = cfg.max_nodes;
  eval.prepare(per_route_actions);
  return eval.run();
}

namespace {

OracleResult solve_impl(const OracleConfig& cfg, bool memoize) {
  cfg.validate();
  auto seqs0 = realizable_sequences(cfg.env, 0, cfg.history, cfg.max_policies);
  auto seqs1 = realizable_sequences(cfg.env, 1, cfg.history, cfg.max_policies);
  if (seqs0.size() * seqs1.size() > cfg.max_policies)
    throw ConfigError("instance too large: " +
                      std::to_string(seqs0.size() * seqs1.size()) +
                      " policy pairs exceed the cap");

  OracleResult best;
  best.success = -1.0;
  PolicyEval eval;
  eval.cfg = &cfg.env;
  eval.horizon = cfg.env.max_steps;
  eval.max_nodes = cfg.max_nodes;
  eval.memoize = memoize;

  for (const auto& s0 : seqs0) {
    for (const auto& s1 : seqs1) {
      eval.prepare({s0, s1});
      double v = eval.run();
      best.policies_evaluated += 1;
      if (v > best.success) {
        best.success = v;
        best.policy = {s0, s1};
      }
    }
  }
  best.states_expanded = eval.nodes;
  best.cache_hits = eval.hits;
  best.collision_rate = 1.0 - best.success;
  best.b_lb = best.collision_rate;
  return best;
}

}  // namespace

OracleResult solve(const OracleConfig& cfg) { return solve_impl(cfg, true); }

bool verify_memoization(const OracleConfig& cfg) {
  OracleResult with = solve_impl(cfg, true);
  OracleResult without = solve_impl(cfg, false);
  return with.success == without.success && with.policy == without.policy;
}

}  // namespace commgate
