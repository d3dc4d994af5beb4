#pragma once

#include <string>
#include <vector>

#include "commgate/enforcers.hpp"

namespace commgate {

enum class Phase { OpenGate, MaxCommReward, SoftEnforce, HardEnforce, Taper, Done };

std::string phase_name(Phase p);
Phase phase_from_name(const std::string& s);

struct PhaseCriteria {
  double success_threshold = 0.95;   // TJ: windowed success to leave phases 1-2
  double reward_threshold_frac = 0.9;  // PP: fraction of best windowed reward
  bool reward_based = false;           // PP tasks gate on reward, TJ on success
  int window = 10;                     // epochs per sliding window
  double comm_floor = 0.9;             // MaxCommReward exit needs windowed c >= this
  double plateau_dc = 0.01;            // |change in windowed c| for a plateau
  double plateau_dreward = 0.01;       // relative reward change for a plateau
  double taper_factor = 0.5;
  double taper_floor = 1e-5;
  int taper_epochs = 10;

  void validate() const;
};

/// Windowed statistics the controller consumes once per epoch. All means are
/// over the last `window` epochs spent in the current phase; `epochs_in_phase`
/// guards against windows that straddle a transition.
struct WindowStats {
  int epochs_in_phase = 0;
  double success = 0.0;
  double mean_reward = 0.0;
  double c = 0.0;
  double c_hard = 0.0;
  bool plateau = false;          // windowed c and reward both flat
  double best_windowed_reward = 0.0;  // best seen within the current phase
};

/// One transition step of the phase machine. `terminal_mode` is the
/// configured enforcement route (None: stay in OpenGate; CommMax/Soft/Hard:
/// how deep the machine goes before tapering).
Phase advance(Phase phase, const WindowStats& stats, const PhaseCriteria& criteria,
              const BudgetConfig& budget, EnforcerMode terminal_mode,
              int tapers_done);

/// max(floor, lr * factor); applied once per epoch while in Taper.
double taper_lr(double lr, double factor, double floor_value);

/// Pure mapping from phase to the active reward shaping. Taper and Done keep
/// the last enforcer that was active before them.
EnforcerMode phase_reward_mode(Phase phase, EnforcerMode last_active);

/// Whether the gate is forced open (delivered = 1 for every alive agent).
bool gate_forced_open(Phase phase);

/// Stateful wrapper used by the trainer: tracks the phase, epochs in phase,
/// taper count and the last active enforcer, and derives WindowStats from the
/// logged epoch history.
class CurriculumController {
 public:
  CurriculumController(PhaseCriteria criteria, BudgetConfig budget,
                       EnforcerMode terminal_mode, bool enabled);

  struct EpochObservation {
    double success = 0.0;
    double mean_reward = 0.0;
    double c = 0.0;
    double c_hard = 0.0;
  };

  /// Records this epoch's stats and possibly advances the phase. Returns true
  /// when the phase changed. `lr` is tapered in place while in Taper. Passing
  /// allow_advance=false (env difficulty still ramping) records stats but
  /// pins the phase.
  bool observe_epoch(const EpochObservation& obs, double& lr, bool allow_advance = true);

  /// Forgets windowed history (used when the env difficulty ramp completes so
  /// stale easier-traffic epochs cannot satisfy a transition).
  void reset_window();

  Phase phase() const { return phase_; }
  EnforcerMode active_enforcer() const { return phase_reward_mode(phase_, last_active_); }
  EnforcerMode last_active() const { return last_active_; }
  bool gate_open() const { return gate_forced_open(phase_); }
  int epochs_in_phase() const { return epochs_in_phase_; }
  int tapers_done() const { return tapers_done_; }
  bool enabled() const { return enabled_; }
  const PhaseCriteria& criteria() const { return criteria_; }

  /// Checkpoint restore.
  void restore(Phase phase, EnforcerMode last_active, int epochs_in_phase,
               int tapers_done);

 private:
  WindowStats window_stats() const;

  PhaseCriteria criteria_;
  BudgetConfig budget_;
  EnforcerMode terminal_mode_;
  bool enabled_;
  Phase phase_ = Phase::OpenGate;
  EnforcerMode last_active_ = EnforcerMode::None;
  int epochs_in_phase_ = 0;
  int tapers_done_ = 0;
  double best_windowed_reward_ = 0.0;
  std::vector<EpochObservation> history_;  // within the current phase
};

}  // namespace commgate
