#include "commgate/env.hpp"

#include <algorithm>
#include <unordered_map>

namespace commgate {

// ---------------------------------------------------------------------------
// Traffic junction
// ---------------------------------------------------------------------------

int TrafficJunctionConfig::total_route_cells() const {
  int n = 0;
  for (const auto& r : routes) n += static_cast<int>(r.size());
  return n;
}

void TrafficJunctionConfig::validate() const {
  if (routes.empty()) throw ConfigError("tj: no routes defined");
  for (const auto& r : routes) {
    if (r.size() < 2) throw ConfigError("tj: route shorter than 2 cells");
    for (int c : r)
      if (c < 0 || c >= grid * grid) throw ConfigError("tj: route cell outside grid");
  }
  if (n_max < 1) throw ConfigError("tj: n_max must be >= 1");
  if (p_arrive < 0.0 || p_arrive > 1.0) throw ConfigError("tj: p_arrive outside [0, 1]");
  if (max_steps < 1) throw ConfigError("tj: max_steps must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("tj: gamma outside (0, 1]");
  if (difficulty == "easy" && total_route_cells() != 14)
    throw ConfigError("tj: easy variant must have exactly 14 route cells");
}

TrafficJunctionConfig TrafficJunctionConfig::easy() {
  TrafficJunctionConfig cfg;
  cfg.difficulty = "easy";
  cfg.grid = 7;
  cfg.n_max = 5;
  cfg.p_arrive = 0.3;
  cfg.max_steps = 20;
  std::vector<int> east, south;
  for (int c = 0; c < 7; ++c) east.push_back(3 * 7 + c);
  for (int r = 0; r < 7; ++r) south.push_back(r * 7 + 3);
  cfg.routes = {east, south};
  return cfg;
}

TrafficJunctionConfig TrafficJunctionConfig::medium() {
  TrafficJunctionConfig cfg;
  cfg.difficulty = "medium";
  cfg.grid = 8;
  cfg.n_max = 10;
  cfg.p_arrive = 0.2;
  cfg.max_steps = 40;
  auto cell = [](int r, int c) { return r * 8 + c; };
  // Two two-way roads (rows 3/4, cols 3/4); each route turns once inside the
  // 2x2 junction block.
  cfg.routes = {
      {cell(4, 0), cell(4, 1), cell(4, 2), cell(4, 3), cell(4, 4), cell(3, 4),
       cell(2, 4), cell(1, 4), cell(0, 4)},
      {cell(3, 7), cell(3, 6), cell(3, 5), cell(3, 4), cell(3, 3), cell(4, 3),
       cell(5, 3), cell(6, 3), cell(7, 3)},
      {cell(0, 3), cell(1, 3), cell(2, 3), cell(3, 3), cell(4, 3), cell(4, 4),
       cell(4, 5), cell(4, 6), cell(4, 7)},
      {cell(7, 4), cell(6, 4), cell(5, 4), cell(4, 4), cell(3, 4), cell(3, 3),
       cell(3, 2), cell(3, 1), cell(3, 0)},
  };
  return cfg;
}

TrafficJunctionConfig TrafficJunctionConfig::toy(int k, int n_max, int max_steps,
                                                 double p_arrive) {
  TrafficJunctionConfig cfg;
  cfg.difficulty = "toy";
  cfg.grid = k;
  cfg.n_max = n_max;
  cfg.p_arrive = p_arrive;
  cfg.max_steps = max_steps;
  int mid = k / 2;
  std::vector<int> east, south;
  for (int c = 0; c < k; ++c) east.push_back(mid * k + c);
  for (int r = 0; r < k; ++r) south.push_back(r * k + mid);
  cfg.routes = {east, south};
  return cfg;
}

void tj_transition(const TrafficJunctionConfig& cfg, TjState& state,
                   const std::vector<int>& actions,
                   const std::vector<uint8_t>& arrival_wanted,
                   std::vector<double>& rewards, int& collision_cells) {
  int n_slots = static_cast<int>(state.cars.size());
  rewards.assign(n_slots, 0.0);
  collision_cells = 0;

  // Arrivals this step may only use slots that were free at the step start,
  // and capacity is checked against the step-start active count: a car that
  // exits this step frees road capacity from the next step on.
  std::vector<int> free_slots;
  for (int i = 0; i < n_slots; ++i)
    if (state.cars[i].route < 0) free_slots.push_back(i);
  int active_at_start = state.active;

  for (int i = 0; i < n_slots; ++i) {
    TjState::Car& car = state.cars[i];
    if (car.route < 0) continue;
    int a = actions[i];
    if (a != TrafficJunctionEnv::kGas && a != TrafficJunctionEnv::kBrake)
      throw ContractViolation("tj: action out of range");
    car.tau += 1;
    rewards[i] -= cfg.step_penalty * car.tau;
    car.prev_action = a;
    if (a == TrafficJunctionEnv::kGas) {
      car.pos += 1;
      if (car.pos >= static_cast<int>(cfg.routes[car.route].size())) {
        car.route = -1;  // completed; slot reusable next step
        state.active -= 1;
      }
    }
  }

  int spawned = 0;
  size_t next_free = 0;
  for (size_t r = 0; r < arrival_wanted.size(); ++r) {
    if (!arrival_wanted[r]) continue;
    if (active_at_start + spawned >= cfg.n_max) continue;
    if (next_free >= free_slots.size()) continue;
    int slot = free_slots[next_free++];
    state.cars[slot] = TjState::Car{static_cast<int>(r), 0, 0, -1};
    state.active += 1;
    spawned += 1;
  }

  std::unordered_map<int, int> occupancy;
  for (const auto& car : state.cars)
    if (car.route >= 0) occupancy[cfg.routes[car.route][car.pos]] += 1;
  for (int i = 0; i < n_slots; ++i) {
    const auto& car = state.cars[i];
    if (car.route < 0) continue;
    if (occupancy[cfg.routes[car.route][car.pos]] >= 2)
      rewards[i] -= cfg.collision_penalty;
  }
  for (const auto& [cell, count] : occupancy)
    if (count >= 2) collision_cells += 1;

  state.t += 1;
}

TrafficJunctionEnv::TrafficJunctionEnv(TrafficJunctionConfig cfg)
    : cfg_(std::move(cfg)), episode_rng_(0) {
  cfg_.validate();
  spec_.n_agents = cfg_.n_max;
  spec_.n_actions = 2;
  spec_.obs_dim = cfg_.total_route_cells() + static_cast<int>(cfg_.routes.size()) + 2;
  spec_.max_steps = cfg_.max_steps;
  spec_.gamma = cfg_.gamma;
}

std::vector<double> TrafficJunctionEnv::observe(int slot) const {
  std::vector<double> obs(static_cast<size_t>(spec_.obs_dim), 0.0);
  const auto& car = state_.cars[slot];
  if (car.route < 0) return obs;  // dead slot: zero vector
  int base = 0;
  for (int r = 0; r < car.route; ++r) base += static_cast<int>(cfg_.routes[r].size());
  obs[static_cast<size_t>(base + car.pos)] = 1.0;
  int route_off = cfg_.total_route_cells();
  obs[static_cast<size_t>(route_off + car.route)] = 1.0;
  int act_off = route_off + static_cast<int>(cfg_.routes.size());
  if (car.prev_action >= 0) obs[static_cast<size_t>(act_off + car.prev_action)] = 1.0;
  return obs;
}

StepResult TrafficJunctionEnv::make_result(const std::vector<double>& rewards,
                                           int collision_cells) {
  StepResult res;
  res.rewards = rewards;
  res.info.collisions = collision_cells;
  res.alive.resize(static_cast<size_t>(spec_.n_agents));
  res.obs.resize(static_cast<size_t>(spec_.n_agents));
  for (int i = 0; i < spec_.n_agents; ++i) {
    res.alive[i] = state_.cars[i].route >= 0 ? 1 : 0;
    res.obs[i] = observe(i);
  }
  res.done = state_.t >= cfg_.max_steps;
  return res;
}

StepResult TrafficJunctionEnv::reset(Rng& rng) {
  episode_rng_ = rng;
  state_ = TjState{};
  state_.cars.assign(static_cast<size_t>(cfg_.n_max), TjState::Car{});
  total_collisions_ = 0;
  // Step-0 arrivals use the same process as every later step.
  std::vector<uint8_t> wanted(cfg_.routes.size(), 0);
  for (size_t r = 0; r < cfg_.routes.size(); ++r)
    wanted[r] = episode_rng_.bernoulli(cfg_.p_arrive) ? 1 : 0;
  std::vector<double> rewards;
  int collision_cells = 0;
  std::vector<int> no_actions(static_cast<size_t>(cfg_.n_max), kBrake);
  TjState fresh = state_;
  // Spawn-only transition: no cars are active yet, so only arrivals apply.
  tj_transition(cfg_, fresh, no_actions, wanted, rewards, collision_cells);
  fresh.t = 0;
  state_ = fresh;
  total_collisions_ += collision_cells;
  auto res = make_result(std::vector<double>(static_cast<size_t>(cfg_.n_max), 0.0),
                         collision_cells);
  res.done = false;
  return res;
}

StepResult TrafficJunctionEnv::step(const std::vector<int>& actions) {
  if (state_.t >= cfg_.max_steps) throw ContractViolation("tj: episode already done");
  if (actions.size() != static_cast<size_t>(cfg_.n_max))
    throw ContractViolation("tj: one action per agent slot required");
  std::vector<uint8_t> wanted(cfg_.routes.size(), 0);
  for (size_t r = 0; r < cfg_.routes.size(); ++r)
    wanted[r] = episode_rng_.bernoulli(cfg_.p_arrive) ? 1 : 0;
  std::vector<double> rewards;
  int collision_cells = 0;
  tj_transition(cfg_, state_, actions, wanted, rewards, collision_cells);
  total_collisions_ += collision_cells;
  return make_result(rewards, collision_cells);
}

// ---------------------------------------------------------------------------
// Predator-prey
// ---------------------------------------------------------------------------

void PredatorPreyConfig::validate() const {
  if (grid < 2) throw ConfigError("pp: grid must be >= 2");
  if (n_predators < 1) throw ConfigError("pp: need at least one predator");
  if (n_predators + 1 > grid * grid) throw ConfigError("pp: too many agents for grid");
  if (vision != 1) throw ConfigError("pp: only vision radius 1 is supported");
  if (max_steps < 1) throw ConfigError("pp: max_steps must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("pp: gamma outside (0, 1]");
}

PredatorPreyConfig PredatorPreyConfig::small5x5() {
  PredatorPreyConfig cfg;
  cfg.grid = 5;
  cfg.n_predators = 3;
  cfg.max_steps = 20;
  return cfg;
}

PredatorPreyConfig PredatorPreyConfig::large10x10() {
  PredatorPreyConfig cfg;
  cfg.grid = 10;
  cfg.n_predators = 5;
  cfg.max_steps = 40;
  return cfg;
}

PredatorPreyEnv::PredatorPreyEnv(PredatorPreyConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  spec_.n_agents = cfg_.n_predators;
  spec_.n_actions = 5;  // up, down, left, right, stay
  spec_.obs_dim = 9 * 4 + cfg_.grid * cfg_.grid;
  spec_.max_steps = cfg_.max_steps;
  spec_.gamma = cfg_.gamma;
}

std::vector<double> PredatorPreyEnv::observe(int agent) const {
  std::vector<double> obs(static_cast<size_t>(spec_.obs_dim), 0.0);
  int r0 = pred_row_[agent], c0 = pred_col_[agent];
  // 3x3 window, channels per cell: [empty, wall, predator count, prey].
  int idx = 0;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc, idx += 4) {
      int r = r0 + dr, c = c0 + dc;
      if (r < 0 || r >= cfg_.grid || c < 0 || c >= cfg_.grid) {
        obs[static_cast<size_t>(idx + 1)] = 1.0;  // wall
        continue;
      }
      int preds = 0;
      for (int j = 0; j < cfg_.n_predators; ++j)
        if (pred_row_[j] == r && pred_col_[j] == c) ++preds;
      bool prey = (prey_row_ == r && prey_col_ == c);
      if (preds == 0 && !prey) obs[static_cast<size_t>(idx)] = 1.0;
      obs[static_cast<size_t>(idx + 2)] = static_cast<double>(preds);
      if (prey) obs[static_cast<size_t>(idx + 3)] = 1.0;
    }
  }
  obs[static_cast<size_t>(36 + r0 * cfg_.grid + c0)] = 1.0;
  return obs;
}

StepResult PredatorPreyEnv::reset(Rng& rng) {
  t_ = 0;
  prey_reached_ = false;
  // Distinct uniform cells for all predators plus the prey.
  std::vector<int> cells(static_cast<size_t>(cfg_.grid * cfg_.grid));
  for (size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  for (int k = 0; k <= cfg_.n_predators; ++k) {
    int j = k + rng.uniform_int(static_cast<int>(cells.size()) - k);
    std::swap(cells[k], cells[j]);
  }
  pred_row_.resize(static_cast<size_t>(cfg_.n_predators));
  pred_col_.resize(static_cast<size_t>(cfg_.n_predators));
  for (int i = 0; i < cfg_.n_predators; ++i) {
    pred_row_[i] = cells[i] / cfg_.grid;
    pred_col_[i] = cells[i] % cfg_.grid;
  }
  prey_row_ = cells[cfg_.n_predators] / cfg_.grid;
  prey_col_ = cells[cfg_.n_predators] % cfg_.grid;

  StepResult res;
  res.rewards.assign(static_cast<size_t>(cfg_.n_predators), 0.0);
  res.alive.assign(static_cast<size_t>(cfg_.n_predators), 1);
  res.obs.resize(static_cast<size_t>(cfg_.n_predators));
  for (int i = 0; i < cfg_.n_predators; ++i) res.obs[i] = observe(i);
  res.done = false;
  return res;
}

StepResult PredatorPreyEnv::step(const std::vector<int>& actions) {
  if (t_ >= cfg_.max_steps) throw ContractViolation("pp: episode already done");
  static constexpr int dr[5] = {-1, 1, 0, 0, 0};
  static constexpr int dc[5] = {0, 0, -1, 1, 0};
  for (int i = 0; i < cfg_.n_predators; ++i) {
    int a = actions[i];
    if (a < 0 || a >= 5) throw ContractViolation("pp: action out of range");
    int r = pred_row_[i] + dr[a];
    int c = pred_col_[i] + dc[a];
    if (r >= 0 && r < cfg_.grid) pred_row_[i] = r;
    if (c >= 0 && c < cfg_.grid) pred_col_[i] = c;
  }
  int k = 0;
  for (int i = 0; i < cfg_.n_predators; ++i)
    if (pred_row_[i] == prey_row_ && pred_col_[i] == prey_col_) ++k;
  if (k > 0) prey_reached_ = true;

  StepResult res;
  res.rewards.assign(static_cast<size_t>(cfg_.n_predators), 0.0);
  for (int i = 0; i < cfg_.n_predators; ++i)
    res.rewards[i] = k > 0 ? cfg_.on_prey_reward * k : -cfg_.step_penalty;
  res.info.on_prey = k;
  res.alive.assign(static_cast<size_t>(cfg_.n_predators), 1);
  res.obs.resize(static_cast<size_t>(cfg_.n_predators));
  for (int i = 0; i < cfg_.n_predators; ++i) res.obs[i] = observe(i);
  t_ += 1;
  res.done = t_ >= cfg_.max_steps;
  return res;
}

std::unique_ptr<Env> make_env(const std::string& tag) {
  if (tag == "tj-easy")
    return std::make_unique<TrafficJunctionEnv>(TrafficJunctionConfig::easy());
  if (tag == "tj-medium")
    return std::make_unique<TrafficJunctionEnv>(TrafficJunctionConfig::medium());
  if (tag == "pp-5x5")
    return std::make_unique<PredatorPreyEnv>(PredatorPreyConfig::small5x5());
  if (tag == "pp-10x10")
    return std::make_unique<PredatorPreyEnv>(PredatorPreyConfig::large10x10());
  throw ConfigError("unknown env tag: " + tag);
}

}  // namespace commgate
