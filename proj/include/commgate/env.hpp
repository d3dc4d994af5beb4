#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "commgate/errors.hpp"
#include "commgate/rng.hpp"

namespace commgate {

struct DecPomdpSpec {
  int n_agents = 0;
  int n_actions = 0;
  int obs_dim = 0;
  int max_steps = 0;
  double gamma = 1.0;
};

struct StepResult {
  std::vector<std::vector<double>> obs;  // per agent slot; zeros when dead
  std::vector<double> rewards;           // per agent slot, this step
  std::vector<uint8_t> alive;            // alive after the step (acts next step)
  bool done = false;
  struct Info {
    int collisions = 0;  // cells with >= 2 cars this step (TJ)
    int on_prey = 0;     // predators on the prey cell this step (PP)
  } info;
};

/// Episode interface shared by all environments. Agent slots are fixed; the
/// alive mask says which slots host an active agent.
class Env {
 public:
  virtual ~Env() = default;
  virtual const DecPomdpSpec& spec() const = 0;
  virtual StepResult reset(Rng& rng) = 0;
  virtual StepResult step(const std::vector<int>& actions) = 0;
  /// Success of the episode so far (TJ: zero collisions; PP: prey reached).
  virtual bool episode_success() const = 0;
  virtual int episode_collisions() const = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Traffic junction
// ---------------------------------------------------------------------------

struct TrafficJunctionConfig {
  std::string difficulty = "easy";
  int grid = 7;
  // route[r] is the ordered list of grid cells (row * grid + col) a car on
  // route r traverses.
  std::vector<std::vector<int>> routes;
  int n_max = 5;
  double p_arrive = 0.3;
  double step_penalty = 0.01;      // -step_penalty * tau per acted step
  double collision_penalty = 10.0;  // subtracted per colliding car per step
  int max_steps = 20;
  double gamma = 1.0;

  int total_route_cells() const;
  void validate() const;

  /// Two one-way single-lane roads crossing mid-grid; 14 route cells.
  static TrafficJunctionConfig easy();
  /// Two two-way roads, four turning routes through a 2x2 junction block.
  static TrafficJunctionConfig medium();
  /// k x k crossing used by oracle tests (routes of length k, junction at
  /// the middle cell).
  static TrafficJunctionConfig toy(int k, int n_max, int max_steps, double p_arrive);
};

/// Car slots: -1 route means the slot is free.
struct TjState {
  struct Car {
    int route = -1;
    int pos = 0;
    int tau = 0;        // acted steps since arrival
    int prev_action = -1;
  };
  std::vector<Car> cars;
  int t = 0;
  int active = 0;
};

/// Pure transition: applies actions for active cars, then arrivals (wanted_r
/// spawns iff capacity remains, route 0 first), then the collision scan.
/// Returns per-slot rewards and the number of colliding cells via out params.
void tj_transition(const TrafficJunctionConfig& cfg, TjState& state,
                   const std::vector<int>& actions,
                   const std::vector<uint8_t>& arrival_wanted,
                   std::vector<double>& rewards, int& collision_cells);

class TrafficJunctionEnv : public Env {
 public:
  explicit TrafficJunctionEnv(TrafficJunctionConfig cfg);
  const DecPomdpSpec& spec() const override { return spec_; }
  StepResult reset(Rng& rng) override;
  StepResult step(const std::vector<int>& actions) override;
  bool episode_success() const override { return total_collisions_ == 0; }
  int episode_collisions() const override { return total_collisions_; }
  std::string name() const override { return "tj-" + cfg_.difficulty; }

  const TrafficJunctionConfig& config() const { return cfg_; }
  const TjState& state() const { return state_; }
  std::vector<double> observe(int slot) const;

  static constexpr int kGas = 0;
  static constexpr int kBrake = 1;

 private:
  StepResult make_result(const std::vector<double>& rewards, int collision_cells);

  TrafficJunctionConfig cfg_;
  DecPomdpSpec spec_;
  TjState state_;
  Rng episode_rng_;
  int total_collisions_ = 0;
};

// ---------------------------------------------------------------------------
// Predator-prey (cooperative)
// ---------------------------------------------------------------------------

struct PredatorPreyConfig {
  int grid = 5;
  int n_predators = 3;
  int vision = 1;  // 3x3 window
  double step_penalty = 0.05;
  double on_prey_reward = 0.05;  // +on_prey_reward * k to every predator
  bool cooperative = true;
  int max_steps = 20;
  double gamma = 1.0;

  void validate() const;
  static PredatorPreyConfig small5x5();
  static PredatorPreyConfig large10x10();
};

class PredatorPreyEnv : public Env {
 public:
  explicit PredatorPreyEnv(PredatorPreyConfig cfg);
  const DecPomdpSpec& spec() const override { return spec_; }
  StepResult reset(Rng& rng) override;
  StepResult step(const std::vector<int>& actions) override;
  bool episode_success() const override { return prey_reached_; }
  int episode_collisions() const override { return 0; }
  std::string name() const override {
    return "pp-" + std::to_string(cfg_.grid) + "x" + std::to_string(cfg_.grid);
  }

  const PredatorPreyConfig& config() const { return cfg_; }
  std::vector<double> observe(int agent) const;

 private:
  PredatorPreyConfig cfg_;
  DecPomdpSpec spec_;
  std::vector<int> pred_row_, pred_col_;
  int prey_row_ = 0, prey_col_ = 0;
  int t_ = 0;
  bool prey_reached_ = false;
};

/// Factory from the experiment config env tag: tj-easy, tj-medium, pp-5x5,
/// pp-10x10.
std::unique_ptr<Env> make_env(const std::string& tag);

}  // namespace commgate
