#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace commgate {

/// Parses a metrics.jsonl file; corrupt lines are skipped and counted.
std::vector<nlohmann::json> load_metrics(const std::string& path, int* skipped = nullptr);

/// First epoch whose trailing `window`-epoch mean of `field` reaches
/// `threshold`; nullopt when never reached.
std::optional<int> convergence_epoch(const std::vector<nlohmann::json>& metrics,
                                     const std::string& field, int window,
                                     double threshold);

/// Windowed mean of `field` over the last `window` epochs.
double final_windowed(const std::vector<nlohmann::json>& metrics,
                      const std::string& field, int window);

/// Per-run summary derived purely from metrics.jsonl.
struct RunSummary {
  std::string run_dir;
  std::string env;
  std::string label;  // mode (and budget for enforcer runs)
  int epochs = 0;
  double final_success = 0.0;  // trailing-window mean
  double final_reward = 0.0;
  double final_c = 0.0;
  std::optional<int> conv_epoch;         // windowed success >= threshold
  std::optional<int> budget_epoch;       // first in-band epoch (enforcer runs)
  std::optional<int> extra_epochs;       // budget_epoch - conv_epoch
  int skipped_lines = 0;
};

RunSummary summarize_run(const std::string& run_dir, int window,
                         double success_threshold);

/// Emits comparison CSV plus comm-fraction and success SVG plots for a set of
/// run directories. Returns the files written. Pure function of the metrics:
/// regenerating from the same inputs is byte-identical.
std::vector<std::string> write_report(const std::vector<std::string>& run_dirs,
                                      const std::string& out_dir, int window,
                                      double success_threshold);

/// Minimal dependency-free polyline plot.
struct SvgSeries {
  std::string label;
  std::vector<double> xs, ys;
};
std::string render_svg(const std::vector<SvgSeries>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label);

}  // namespace commgate
