#include "commgate/curriculum.hpp"

#include <algorithm>
#include <cmath>

#include "commgate/errors.hpp"

namespace commgate {

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::OpenGate: return "OpenGate";
    case Phase::MaxCommReward: return "MaxCommReward";
    case Phase::SoftEnforce: return "SoftEnforce";
    case Phase::HardEnforce: return "HardEnforce";
    case Phase::Taper: return "Taper";
    case Phase::Done: return "Done";
  }
  return "?";
}

Phase phase_from_name(const std::string& s) {
  for (Phase p : {Phase::OpenGate, Phase::MaxCommReward, Phase::SoftEnforce,
                  Phase::HardEnforce, Phase::Taper, Phase::Done})
    if (phase_name(p) == s) return p;
  throw ConfigError("unknown phase name: " + s);
}

void PhaseCriteria::validate() const {
  if (!(success_threshold > 0.0 && success_threshold <= 1.0))
    throw ConfigError("curriculum.success_threshold must be in (0, 1]");
  if (window < 1) throw ConfigError("curriculum.window must be >= 1");
  if (!(taper_factor > 0.0 && taper_factor < 1.0))
    throw ConfigError("curriculum.taper_factor must be in (0, 1)");
  if (taper_floor <= 0.0) throw ConfigError("curriculum.taper_floor must be positive");
  if (taper_epochs < 1) throw ConfigError("curriculum.taper_epochs must be >= 1");
}

namespace {

bool task_criterion_met(const WindowStats& stats, const PhaseCriteria& c) {
  if (c.reward_based)
    return stats.plateau &&
           stats.mean_reward >= c.reward_threshold_frac * stats.best_windowed_reward;
  return stats.success >= c.success_threshold;
}

}  // namespace

Phase advance(Phase phase, const WindowStats& stats, const PhaseCriteria& criteria,
              const BudgetConfig& budget, EnforcerMode terminal_mode,
              int tapers_done) {
  if (phase == Phase::Done) return Phase::Done;
  if (phase == Phase::Taper)
    return tapers_done >= criteria.taper_epochs ? Phase::Done : Phase::Taper;
  if (stats.epochs_in_phase < criteria.window) return phase;  // window not filled yet
  switch (phase) {
    case Phase::OpenGate:
      if (!task_criterion_met(stats, criteria)) return phase;
      if (terminal_mode == EnforcerMode::None) return phase;  // fixed/gated runs stay
      return Phase::MaxCommReward;
    case Phase::MaxCommReward:
      if (!task_criterion_met(stats, criteria)) return phase;
      if (stats.c < criteria.comm_floor) return phase;  // must communicate >= 90%
      if (terminal_mode == EnforcerMode::CommMax) return Phase::Taper;
      return Phase::SoftEnforce;
    case Phase::SoftEnforce: {
      bool in_band = std::fabs(stats.c - budget.b) <= budget.epsilon;
      if (in_band && terminal_mode == EnforcerMode::Soft) return Phase::Taper;
      if (!stats.plateau && !in_band) return phase;
      if (terminal_mode == EnforcerMode::Hard) return Phase::HardEnforce;
      // Soft route: a plateau outside the band also ends the phase; the run
      // records the achieved fraction rather than masking structurally.
      return in_band || stats.plateau ? Phase::Taper : phase;
    }
    case Phase::HardEnforce: {
      // c_hard <= b structurally, so the band check is one-sided; a saturated
      // bucket (binding budget) also counts as converged.
      bool in_band = std::fabs(stats.c_hard - budget.b) <= budget.epsilon;
      if (in_band || stats.plateau) return Phase::Taper;
      return phase;
    }
    case Phase::Taper:
      return tapers_done >= criteria.taper_epochs ? Phase::Done : phase;
    case Phase::Done:
      return Phase::Done;
  }
  return phase;
}

double taper_lr(double lr, double factor, double floor_value) {
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("taper_lr: factor outside (0, 1)");
  return std::max(floor_value, lr * factor);
}

EnforcerMode phase_reward_mode(Phase phase, EnforcerMode last_active) {
  switch (phase) {
    case Phase::OpenGate: return EnforcerMode::None;
    case Phase::MaxCommReward: return EnforcerMode::CommMax;
    case Phase::SoftEnforce: return EnforcerMode::Soft;
    case Phase::HardEnforce: return EnforcerMode::Hard;
    case Phase::Taper:
    case Phase::Done: return last_active;
  }
  return EnforcerMode::None;
}

bool gate_forced_open(Phase phase) { return phase == Phase::OpenGate; }

CurriculumController::CurriculumController(PhaseCriteria criteria, BudgetConfig budget,
                                           EnforcerMode terminal_mode, bool enabled)
    : criteria_(criteria), budget_(budget), terminal_mode_(terminal_mode),
      enabled_(enabled) {
  criteria_.validate();
}

WindowStats CurriculumController::window_stats() const {
  WindowStats s;
  s.epochs_in_phase = epochs_in_phase_;
  int w = criteria_.window;
  int n = static_cast<int>(history_.size());
  int take = std::min(w, n);
  if (take == 0) return s;
  for (int i = n - take; i < n; ++i) {
    s.success += history_[i].success;
    s.mean_reward += history_[i].mean_reward;
    s.c += history_[i].c;
    s.c_hard += history_[i].c_hard;
  }
  s.success /= take;
  s.mean_reward /= take;
  s.c /= take;
  s.c_hard /= take;
  s.best_windowed_reward = best_windowed_reward_;

  // Plateau: windowed c and reward both flat across two half-windows.
  if (n >= 2 * w) {
    double c_a = 0.0, c_b = 0.0, r_a = 0.0, r_b = 0.0;
    for (int i = n - 2 * w; i < n - w; ++i) {
      c_a += history_[i].c;
      r_a += history_[i].mean_reward;
    }
    for (int i = n - w; i < n; ++i) {
      c_b += history_[i].c;
      r_b += history_[i].mean_reward;
    }
    c_a /= w; c_b /= w; r_a /= w; r_b /= w;
    double r_scale = std::max({std::fabs(r_a), std::fabs(r_b), 1e-6});
    s.plateau = std::fabs(c_b - c_a) < criteria_.plateau_dc &&
                std::fabs(r_b - r_a) / r_scale < criteria_.plateau_dreward;
  }
  return s;
}

void CurriculumController::reset_window() {
  history_.clear();
  epochs_in_phase_ = 0;
  best_windowed_reward_ = 0.0;
}

bool CurriculumController::observe_epoch(const EpochObservation& obs, double& lr,
                                         bool allow_advance) {
  epochs_in_phase_ += 1;
  history_.push_back(obs);
  WindowStats stats = window_stats();
  if (stats.epochs_in_phase >= criteria_.window)
    best_windowed_reward_ = std::max(best_windowed_reward_, stats.mean_reward);
  stats.best_windowed_reward = best_windowed_reward_;

  if (phase_ == Phase::Taper) {
    lr = taper_lr(lr, criteria_.taper_factor, criteria_.taper_floor);
    tapers_done_ += 1;
  }
  if (!enabled_ || !allow_advance) return false;

  Phase next = advance(phase_, stats, criteria_, budget_, terminal_mode_, tapers_done_);
  if (next == phase_) return false;
  if (phase_ == Phase::SoftEnforce || phase_ == Phase::MaxCommReward ||
      phase_ == Phase::HardEnforce)
    last_active_ = phase_reward_mode(phase_, last_active_);
  phase_ = next;
  epochs_in_phase_ = 0;
  history_.clear();
  best_windowed_reward_ = 0.0;
  return true;
}

void CurriculumController::restore(Phase phase, EnforcerMode last_active,
                                   int epochs_in_phase, int tapers_done) {
  phase_ = phase;
  last_active_ = last_active;
  epochs_in_phase_ = epochs_in_phase;
  tapers_done_ = tapers_done;
  history_.clear();
  best_windowed_reward_ = 0.0;
}

}  // namespace commgate
