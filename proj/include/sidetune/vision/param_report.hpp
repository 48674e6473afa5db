// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "sidetune/fusion/fused_encoder.hpp"
#include "sidetune/vision/preprocess.hpp"

namespace sidetune {

/// Weight counts per component. Batch-norm running statistics are buffers
/// and are not counted. `base` is locked and excluded from trainable().
struct ParamReport {
  std::size_t base = 0;
  std::vector<std::size_t> sides;
  std::vector<std::size_t> adaptation;
  std::size_t fc = 0;
  std::size_t head = 0;

  std::size_t trainable() const {
    return std::accumulate(sides.begin(), sides.end(), std::size_t{0}) +
           std::accumulate(adaptation.begin(), adaptation.end(), std::size_t{0}) + fc + head;
  }
  std::size_t total() const { return base + trainable(); }
};

namespace detail {

inline bool is_buffer_name(const std::string& name) {
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with("running_mean") || ends_with("running_var");
}

template <typename T>
std::size_t count_weights(const std::vector<nn::NamedParameter<T>>& params) {
  std::size_t n = 0;
  for (const auto& np : params)
    if (!is_buffer_name(np.name)) n += np.param->value.size();
  return n;
}

}  // namespace detail

template <typename T>
ParamReport trainable_param_report(FusedEncoder<T>& model) {
  ParamReport r;
  r.base = detail::count_weights(model.base().named_parameters());
  for (std::size_t i = 0; i < model.num_sides(); ++i) {
    auto& side = model.side(i);
    r.sides.push_back(detail::count_weights(side.encoder->named_parameters()));
    r.adaptation.push_back(side.adapt ? detail::count_weights(side.adapt->named_parameters()) : 0);
  }
  if (auto* fc = model.head().fc_layer()) r.fc = detail::count_weights(fc->named_parameters());
  r.head = detail::count_weights(model.head().score_layer().named_parameters());
  return r;
}

/// Rounded published model size for the configuration, for side-by-side display.
inline std::string published_param_count(BackboneKind backbone, bool image_side, bool text_side) {
  if (!image_side && text_side) return "~1.8M";
  const bool mobile = backbone == BackboneKind::MobileNetV2;
  if (image_side && text_side) return mobile ? "~12M" : "~57M";
  if (image_side) return mobile ? "~7M" : "~51M";
  return mobile ? "~3.5M" : "n/a";
}

inline std::string format_count(std::size_t n) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%zu (%.2fM)", n, static_cast<double>(n) / 1e6);
  return buf;
}

template <typename T>
std::string format_param_report(FusedEncoder<T>& model, BackboneKind backbone) {
  const auto r = trainable_param_report(model);
  auto line = [](std::string label, std::string value) {
    label.resize(std::max<std::size_t>(label.size() + 1, 21), ' ');
    return label + value + "\n";
  };
  bool image_side = false, text_side = false;
  std::string out = line("component", "parameters");
  out += line("base (locked)", format_count(r.base));
  for (std::size_t i = 0; i < r.sides.size(); ++i) {
    const auto& encoder = *model.side(i).encoder;
    (encoder.modality() == Modality::Image ? image_side : text_side) = true;
    out += line("side " + std::to_string(i) + " (" + encoder.architecture() + ")", format_count(r.sides[i]));
    if (r.adaptation[i]) out += line("  adaptation", format_count(r.adaptation[i]));
  }
  if (r.fc) out += line("fc", format_count(r.fc));
  out += line("head", format_count(r.head));
  out += line("trainable", format_count(r.trainable()));
  out += line("total", format_count(r.total()));
  out += line("published", published_param_count(backbone, image_side, text_side));
  return out;
}

}  // namespace sidetune
