// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sidetune/core/error.hpp"

namespace sidetune {

/// Overall accuracy, per-class accuracy and the confusion matrix
/// (rows: true class, columns: predicted class). Classes without samples have
/// no per-class accuracy.
struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t num_samples = 0;
  double overall_accuracy = 0.0;
  std::vector<std::optional<double>> per_class_accuracy;

  std::size_t num_classes() const noexcept { return confusion.size(); }

  static EvalReport from_predictions(std::span<const int> labels, std::span<const int> predictions,
                                     std::vector<std::string> class_names) {
    if (labels.empty()) fail(ErrorKind::EmptyEvalSet, "evaluation set is empty");
    if (labels.size() != predictions.size())
      fail(ErrorKind::DimensionMismatch, std::to_string(labels.size()) + " labels but " +
                                             std::to_string(predictions.size()) + " predictions");
    const std::size_t c = class_names.size();
    EvalReport r;
    r.class_names = std::move(class_names);
    r.confusion.assign(c, std::vector<std::size_t>(c, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int y = labels[i], p = predictions[i];
      if (y < 0 || p < 0 || static_cast<std::size_t>(y) >= c || static_cast<std::size_t>(p) >= c)
        fail(ErrorKind::OutOfRange, "class index outside [0, " + std::to_string(c) + ")");
      ++r.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)];
    }
    r.finish();
    return r;
  }

  /// Derives the sample count and accuracies from the confusion matrix.
  void finish() {
    num_samples = 0;
    std::size_t correct = 0;
    per_class_accuracy.assign(confusion.size(), std::nullopt);
    for (std::size_t k = 0; k < confusion.size(); ++k) {
      std::size_t row = 0;
      for (auto v : confusion[k]) row += v;
      num_samples += row;
      correct += confusion[k][k];
      if (row > 0) per_class_accuracy[k] = static_cast<double>(confusion[k][k]) / static_cast<double>(row);
    }
    if (num_samples == 0) fail(ErrorKind::EmptyEvalSet, "evaluation set is empty");
    overall_accuracy = static_cast<double>(correct) / static_cast<double>(num_samples);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["num_samples"] = num_samples;
    j["overall_accuracy"] = overall_accuracy;
    j["class_names"] = class_names;
    auto per_class = nlohmann::json::object();
    for (std::size_t k = 0; k < class_names.size(); ++k)
      per_class[class_names[k]] = per_class_accuracy[k] ? nlohmann::json(*per_class_accuracy[k]) : nlohmann::json();
    j["per_class_accuracy"] = per_class;
    j["confusion"] = confusion;
    return j;
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    if (r.confusion.size() != r.class_names.size())
      fail(ErrorKind::DimensionMismatch, "confusion matrix does not match the class list");
    r.finish();
    return r;
  }

  /// Markdown tables: OA plus one column per class, then the confusion matrix.
  std::string to_markdown(const std::string& model_label) const {
    auto pct = [](std::optional<double> v) {
      if (!v) return std::string("-");
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * *v);
      return std::string(buf);
    };
    std::string out = "| Model | OA |";
    std::string rule = "|---|---|";
    for (const auto& name : class_names) {
      out += " " + name + " |";
      rule += "---|";
    }
    out += "\n" + rule + "\n| " + model_label + " | " + pct(overall_accuracy) + " |";
    for (const auto& acc : per_class_accuracy) out += " " + pct(acc) + " |";
    out += "\n\nSamples: " + std::to_string(num_samples) + "\n\nConfusion matrix (rows: true, columns: predicted)\n\n|   |";
    std::string rule2 = "|---|";
    for (const auto& name : class_names) {
      out += " " + name + " |";
      rule2 += "---|";
    }
    out += "\n" + rule2 + "\n";
    for (std::size_t k = 0; k < confusion.size(); ++k) {
      out += "| " + class_names[k] + " |";
      for (auto v : confusion[k]) out += " " + std::to_string(v) + " |";
      out += "\n";
    }
    return out;
  }
};

}  // namespace sidetune
