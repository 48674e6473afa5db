// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sidetune/cli/kv_config.hpp"
#include "sidetune/train/metrics.hpp"
#include "sidetune/train/sweep.hpp"
#include "sidetune/train/trainer.hpp"

namespace sidetune {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
    out << content;
    if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string optional_real(const std::optional<double>& v) { return v ? format_real(*v) : "-"; }

inline nlohmann::json epoch_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"lr_first", r.lr_first},
                   {"lr_last", r.lr_last},
                   {"train_loss", r.train_loss},
                   {"train_accuracy", r.train_accuracy},
                   {"seconds", r.seconds}};
  j["val_loss"] = r.val_loss ? nlohmann::json(*r.val_loss) : nlohmann::json();
  j["val_accuracy"] = r.val_accuracy ? nlohmann::json(*r.val_accuracy) : nlohmann::json();
  return j;
}

/// history.tsv (table) and history.jsonl (one record per epoch).
inline void write_history(const std::filesystem::path& dir, const std::vector<EpochRecord>& history) {
  std::string tsv = "epoch\tlr_first\tlr_last\ttrain_loss\ttrain_accuracy\tval_loss\tval_accuracy\tseconds\n";
  std::string jsonl;
  for (const auto& r : history) {
    tsv += std::to_string(r.epoch) + "\t" + format_real(r.lr_first) + "\t" + format_real(r.lr_last) + "\t" +
           format_real(r.train_loss) + "\t" + format_real(r.train_accuracy) + "\t" + optional_real(r.val_loss) + "\t" +
           optional_real(r.val_accuracy) + "\t" + format_real(r.seconds) + "\n";
    jsonl += epoch_json(r).dump() + "\n";
  }
  write_file(dir / "history.tsv", tsv);
  write_file(dir / "history.jsonl", jsonl);
}

/// report.md (OA and one column per class, then the confusion matrix) and report.json.
inline void write_eval_report(const std::filesystem::path& dir, const EvalReport& report, const std::string& label,
                              const nlohmann::json& context) {
  write_file(dir / "report.md", "# Evaluation: " + label + "\n\n" + report.to_markdown(label));
  auto j = report.to_json();
  j["context"] = context;
  write_file(dir / "report.json", j.dump(2) + "\n");
}

inline std::string alpha_label(const AlphaConfig& a) {
  std::string out = "(";
  for (std::size_t i = 0; i < a.size(); ++i) out += (i ? "," : "") + format_real(a[i]);
  return out + ")";
}

/// SVG line chart: one polyline per series over shared categorical x labels.
/// Values are fractions and drawn as percentages.
inline std::string svg_line_plot(const std::string& title, const std::vector<std::string>& x_labels,
                                 const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const double width = 760, height = 460, left = 70, right = 170, top = 50, bottom = 110;
  const double pw = width - left - right, ph = height - top - bottom;
  double lo = 1.0, hi = 0.0;
  for (const auto& s : series)
    for (double v : s.second) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (lo > hi) lo = 0.0, hi = 1.0;
  lo = std::max(0.0, std::floor(lo * 20.0 - 1.0) / 20.0);
  hi = std::min(1.0, std::ceil(hi * 20.0 + 1.0) / 20.0);
  if (hi - lo < 1e-9) hi = lo + 0.05;
  const std::size_t n = std::max<std::size_t>(x_labels.size(), 1);
  auto px = [&](std::size_t i) { return left + (n == 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(n - 1)); };
  auto py = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return std::string(buf);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
                    "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + title + "</text>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = lo + (hi - lo) * t / 5.0;
    svg += "<line x1=\"" + num(left) + "\" x2=\"" + num(left + pw) + "\" y1=\"" + num(py(v)) + "\" y2=\"" + num(py(v)) +
           "\" stroke=\"#dddddd\"/>\n<text x=\"" + num(left - 8) + "\" y=\"" + num(py(v) + 4) +
           "\" text-anchor=\"end\">" + num(100.0 * v) + "</text>\n";
  }
  svg += "<text transform=\"translate(18," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">accuracy (%)</text>\n";
  for (std::size_t i = 0; i < x_labels.size(); ++i)
    svg += "<text transform=\"translate(" + num(px(i)) + "," + num(top + ph + 14) + ") rotate(45)\">" + x_labels[i] +
           "</text>\n";
  svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const std::string color = colors[s % 6];
    std::string points;
    for (std::size_t i = 0; i < series[s].second.size(); ++i)
      points += (i ? " " : "") + num(px(i)) + "," + num(py(series[s].second[i]));
    svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    for (std::size_t i = 0; i < series[s].second.size(); ++i)
      svg += "<circle cx=\"" + num(px(i)) + "\" cy=\"" + num(py(series[s].second[i])) + "\" r=\"3\" fill=\"" + color +
             "\"/>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(s);
    svg += "<line x1=\"" + num(left + pw + 15) + "\" x2=\"" + num(left + pw + 40) + "\" y1=\"" + num(ly) + "\" y2=\"" +
           num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n<text x=\"" + num(left + pw + 46) + "\" y=\"" +
           num(ly + 4) + "\">" + series[s].first + "</text>\n";
  }
  return svg + "</svg>\n";
}

/// sweep.tsv, sweep.jsonl and one sweep_<backbone>.svg per backbone with a
/// trend per fc variant.
inline void write_sweep(const std::filesystem::path& dir, const std::vector<SweepRow>& rows) {
  std::string tsv = "job\tbackbone\tfc\talphas\toverall_accuracy\tnum_samples\n";
  std::string jsonl;
  for (const auto& r : rows) {
    tsv += std::to_string(r.job.index) + "\t" + backbone_name(r.job.backbone) + "\t" + fc_label(r.job.fc_width) + "\t" +
           alpha_label(r.job.alpha) + "\t" + format_real(r.report.overall_accuracy) + "\t" +
           std::to_string(r.report.num_samples) + "\n";
    nlohmann::json j{{"job", r.job.index},
                     {"backbone", backbone_name(r.job.backbone)},
                     {"fc", fc_label(r.job.fc_width)},
                     {"alphas", std::vector<double>(r.job.alpha.values().begin(), r.job.alpha.values().end())},
                     {"seed", r.job.seed},
                     {"report", r.report.to_json()}};
    jsonl += j.dump() + "\n";
  }
  write_file(dir / "sweep.tsv", tsv);
  write_file(dir / "sweep.jsonl", jsonl);

  std::vector<BackboneKind> backbones;
  for (const auto& r : rows)
    if (std::find(backbones.begin(), backbones.end(), r.job.backbone) == backbones.end())
      backbones.push_back(r.job.backbone);
  for (auto b : backbones) {
    std::vector<std::string> labels;
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (const auto& r : rows) {
      if (r.job.backbone != b) continue;
      const auto name = fc_label(r.job.fc_width);
      auto it = std::find_if(series.begin(), series.end(), [&](const auto& s) { return s.first == name; });
      if (it == series.end()) {
        series.push_back({name, {}});
        it = series.end() - 1;
      }
      it->second.push_back(r.report.overall_accuracy);
      if (it == series.begin()) labels.push_back(alpha_label(r.job.alpha));
    }
    write_file(dir / ("sweep_" + backbone_name(b) + ".svg"), svg_line_plot(backbone_name(b), labels, series));
  }
}

}  // namespace sidetune
