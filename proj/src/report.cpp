#include "commgate/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "commgate/errors.hpp"

namespace commgate {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<json> load_metrics(const std::string& path, int* skipped) {
  std::ifstream in(path);
  if (!in) throw EvalError("cannot open metrics file: " + path);
  std::vector<json> lines;
  std::string line;
  int bad = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      lines.push_back(json::parse(line));
    } catch (const json::exception&) {
      bad += 1;  // corrupt line: skip with a count
    }
  }
  if (skipped) *skipped = bad;
  return lines;
}

std::optional<int> convergence_epoch(const std::vector<json>& metrics,
                                     const std::string& field, int window,
                                     double threshold) {
  if (window < 1) window = 1;
  std::vector<double> vals;
  vals.reserve(metrics.size());
  for (const auto& m : metrics) vals.push_back(m.value(field, 0.0));
  double acc = 0.0;
  for (size_t i = 0; i < vals.size(); ++i) {
    acc += vals[i];
    if (i >= static_cast<size_t>(window)) acc -= vals[i - window];
    size_t have = std::min(i + 1, static_cast<size_t>(window));
    if (static_cast<int>(have) == window && acc / window >= threshold)
      return metrics[i].value("epoch", static_cast<int>(i));
  }
  return std::nullopt;
}

double final_windowed(const std::vector<json>& metrics, const std::string& field,
                      int window) {
  if (metrics.empty()) return 0.0;
  int n = static_cast<int>(metrics.size());
  int take = std::min(window, n);
  double acc = 0.0;
  for (int i = n - take; i < n; ++i) acc += metrics[i].value(field, 0.0);
  return acc / take;
}

RunSummary summarize_run(const std::string& run_dir, int window,
                         double success_threshold) {
  RunSummary s;
  s.run_dir = run_dir;
  auto metrics = load_metrics(run_dir + "/metrics.jsonl", &s.skipped_lines);
  if (metrics.empty()) throw EvalError("empty metrics in " + run_dir);
  s.epochs = static_cast<int>(metrics.size());
  s.env = metrics.front().value("env", std::string("?"));

  std::string mode = "?";
  double budget = -1.0;
  std::string cfg_path = run_dir + "/config.json";
  if (fs::exists(cfg_path)) {
    std::ifstream in(cfg_path);
    json cfg;
    try {
      in >> cfg;
      mode = cfg.value("mode", std::string("?"));
      if (cfg.contains("budget")) budget = cfg["budget"].value("b", -1.0);
      if (mode != "enforcer") budget = -1.0;
    } catch (const json::exception&) {
    }
  }
  char label[96];
  if (budget >= 0.0)
    std::snprintf(label, sizeof(label), "%s-b%.2f", mode.c_str(), budget);
  else
    std::snprintf(label, sizeof(label), "%s", mode.c_str());
  s.label = label;

  s.final_success = final_windowed(metrics, "success_rate", window);
  s.final_reward = final_windowed(metrics, "mean_reward", window);
  s.final_c = final_windowed(metrics, "c", window);
  bool reward_based = s.env.rfind("pp-", 0) == 0;
  if (reward_based) {
    double best = -1e300;
    for (const auto& m : metrics) best = std::max(best, m.value("mean_reward", 0.0));
    s.conv_epoch = convergence_epoch(metrics, "mean_reward", window, 0.9 * best);
  } else {
    s.conv_epoch = convergence_epoch(metrics, "success_rate", window, success_threshold);
  }

  if (budget >= 0.0) {
    // First epoch windowed |c - b| within epsilon (0.05, the default band).
    std::vector<double> cs;
    for (const auto& m : metrics) cs.push_back(m.value("c", 0.0));
    double acc = 0.0;
    for (size_t i = 0; i < cs.size(); ++i) {
      acc += cs[i];
      if (i >= static_cast<size_t>(window)) acc -= cs[i - window];
      size_t have = std::min(i + 1, static_cast<size_t>(window));
      if (static_cast<int>(have) == window && std::fabs(acc / window - budget) <= 0.05) {
        s.budget_epoch = metrics[i].value("epoch", static_cast<int>(i));
        break;
      }
    }
    if (s.budget_epoch && s.conv_epoch)
      s.extra_epochs = *s.budget_epoch - *s.conv_epoch;
  }
  return s;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::string render_svg(const std::vector<SvgSeries>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label) {
  const int width = 720, height = 480;
  const int ml = 60, mr = 150, mt = 40, mb = 50;
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool first = true;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.xs.size(); ++i) {
      if (first) {
        xmin = xmax = s.xs[i];
        ymin = ymax = s.ys[i];
        first = false;
      }
      xmin = std::min(xmin, s.xs[i]);
      xmax = std::max(xmax, s.xs[i]);
      ymin = std::min(ymin, s.ys[i]);
      ymax = std::max(ymax, s.ys[i]);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  auto py = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
         "viewBox=\"0 0 720 480\">\n";
  svg += "<rect width=\"720\" height=\"480\" fill=\"white\"/>\n";
  svg += "<text x=\"360\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
         "font-family=\"sans-serif\">" + title + "</text>\n";
  // Axes
  svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(height - mb) + "\" x2=\"" +
         fmt(width - mr) + "\" y2=\"" + fmt(height - mb) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) +
         "\" y2=\"" + fmt(height - mb) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double xv = xmin + (xmax - xmin) * k / 4.0;
    double yv = ymin + (ymax - ymin) * k / 4.0;
    svg += "<text x=\"" + fmt(px(xv)) + "\" y=\"" + fmt(height - mb + 18) +
           "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" +
           fmt(xv) + "</text>\n";
    svg += "<text x=\"" + fmt(ml - 8) + "\" y=\"" + fmt(py(yv) + 4) +
           "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" +
           fmt(yv) + "</text>\n";
  }
  svg += "<text x=\"" + fmt((ml + width - mr) / 2.0) + "\" y=\"" + fmt(height - 12) +
         "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" +
         x_label + "</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt((mt + height - mb) / 2.0) +
         "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 16 " + fmt((mt + height - mb) / 2.0) + ")\">" +
         y_label + "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % 8];
    std::string points;
    for (size_t i = 0; i < s.xs.size(); ++i)
      points += fmt(px(s.xs[i])) + "," + fmt(py(s.ys[i])) + " ";
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    double ly = mt + 16.0 * static_cast<double>(si);
    svg += "<line x1=\"" + fmt(width - mr + 10) + "\" y1=\"" + fmt(ly) + "\" x2=\"" +
           fmt(width - mr + 30) + "\" y2=\"" + fmt(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt(width - mr + 34) + "\" y=\"" + fmt(ly + 4) +
           "\" font-size=\"11\" font-family=\"sans-serif\">" + s.label + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::string> write_report(const std::vector<std::string>& run_dirs,
                                      const std::string& out_dir, int window,
                                      double success_threshold) {
  if (run_dirs.empty()) throw EvalError("report: no run directories given");
  fs::create_directories(out_dir);
  std::vector<std::string> written;

  std::vector<RunSummary> summaries;
  std::vector<SvgSeries> comm_series, success_series;
  for (const auto& dir : run_dirs) {
    RunSummary s = summarize_run(dir, window, success_threshold);
    auto metrics = load_metrics(dir + "/metrics.jsonl");
    SvgSeries cs, ss;
    cs.label = s.label;
    ss.label = s.label;
    for (const auto& m : metrics) {
      double e = m.value("epoch", 0);
      cs.xs.push_back(e);
      cs.ys.push_back(m.value("c", 0.0));
      ss.xs.push_back(e);
      ss.ys.push_back(m.value("success_rate", 0.0));
    }
    comm_series.push_back(std::move(cs));
    success_series.push_back(std::move(ss));
    summaries.push_back(std::move(s));
  }

  {
    std::string path = out_dir + "/comparison.csv";
    std::ofstream out(path);
    out << "label,env,run_dir,epochs,convergence_epoch,final_success,final_reward,"
           "final_c,budget_epoch,extra_epochs_after_fixed,skipped_lines\n";
    for (const auto& s : summaries) {
      out << s.label << "," << s.env << "," << s.run_dir << "," << s.epochs << ",";
      out << (s.conv_epoch ? std::to_string(*s.conv_epoch) : "-") << ",";
      out << fmt(s.final_success) << "," << fmt(s.final_reward) << ","
          << fmt(s.final_c) << ",";
      out << (s.budget_epoch ? std::to_string(*s.budget_epoch) : "-") << ",";
      out << (s.extra_epochs ? "+" + std::to_string(*s.extra_epochs) : "-") << ",";
      out << s.skipped_lines << "\n";
    }
    written.push_back(path);
  }
  {
    std::string path = out_dir + "/comm_fraction.svg";
    std::ofstream out(path);
    out << render_svg(comm_series, "Delivered communication fraction per epoch",
                      "epoch", "c");
    written.push_back(path);
  }
  {
    std::string path = out_dir + "/success.svg";
    std::ofstream out(path);
    out << render_svg(success_series, "Training success per epoch", "epoch",
                      "success rate");
    written.push_back(path);
  }
  return written;
}

}  // namespace commgate
