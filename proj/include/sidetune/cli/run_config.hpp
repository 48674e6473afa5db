// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sidetune/cli/kv_config.hpp"
#include "sidetune/core/sha256.hpp"
#include "sidetune/data/corpus.hpp"
#include "sidetune/data/ocr.hpp"
#include "sidetune/data/split.hpp"
#include "sidetune/fusion/alpha.hpp"
#include "sidetune/fusion/head.hpp"
#include "sidetune/text/embedding.hpp"
#include "sidetune/text/text_cnn.hpp"
#include "sidetune/train/schedule.hpp"
#include "sidetune/vision/preprocess.hpp"

namespace sidetune {

enum class ModelKind { Fused, Text };

/// Everything a run depends on. Every field is written to the run manifest;
/// the configuration hash covers that canonical text.
struct RunConfig {
  // data
  CorpusLayout layout = CorpusLayout::FolderPerClass;
  std::filesystem::path image_root;
  std::filesystem::path text_root;
  std::vector<std::string> class_names;  // index layout only; empty keeps numeric labels
  std::uint64_t split_seed = 42;
  SplitSizes split_sizes = kTobaccoSplit;
  bool split_stratified = false;

  // model
  ModelKind kind = ModelKind::Fused;
  VisionConfig vision;
  bool channel_stats_auto = true;
  std::vector<Modality> sides{Modality::Image, Modality::Text};
  std::vector<double> alphas{0.2, 0.3, 0.5};
  std::optional<std::size_t> fc_width = 1024;
  std::filesystem::path pretrained;  // empty: seeded random initialization

  // text
  TextEncoderConfig text;
  std::filesystem::path embeddings;
  OovPolicy oov = OovPolicy::Zero;

  // training
  TrainConfig train;

  // sweep
  std::vector<std::optional<std::size_t>> sweep_fc_widths{std::nullopt, 512, 1024};
  std::vector<BackboneKind> sweep_backbones{BackboneKind::MobileNetV2};
  std::size_t sweep_parallel = 1;

  OcrConfig ocr;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path out = "runs/default";

  /// Training settings with the run-wide seed and thread count applied.
  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    t.workers = threads;
    return t;
  }

  bool needs_text() const {
    if (kind == ModelKind::Text) return true;
    for (auto m : sides)
      if (m == Modality::Text) return true;
    return false;
  }

  /// Config-level checks; no file system access.
  void validate() const {
    if (kind == ModelKind::Fused) {
      const auto alpha = validate_alphas(alphas);
      if (alpha.size() != sides.size() + 1)
        fail(ErrorKind::ArityMismatch, "model.alphas has " + std::to_string(alpha.size()) + " entries for " +
                                           std::to_string(sides.size()) + " sides (expected sides + 1)");
      validate_fc_width(fc_width);
      vision.validate();
    }
    text.validate();
    train.validate();
    if (threads == 0) fail(ErrorKind::ConfigError, "threads must be at least 1");
    if (sweep_parallel == 0) fail(ErrorKind::ConfigError, "sweep.parallel must be at least 1");
  }

  /// Referenced inputs must exist at launch.
  void check_paths() const {
    auto require_dir = [](const std::filesystem::path& p, const char* key) {
      if (p.empty()) fail(ErrorKind::ConfigError, std::string(key) + " is not set");
      if (!std::filesystem::is_directory(p)) fail(ErrorKind::MissingRoot, std::string(key) + " not found: " + p.string());
    };
    require_dir(image_root, "data.image_root");
    require_dir(text_root, "data.text_root");
    if (needs_text()) {
      if (embeddings.empty()) fail(ErrorKind::ConfigError, "text.embeddings is required for text inputs");
      if (!std::filesystem::exists(embeddings))
        fail(ErrorKind::MissingRoot, "text.embeddings not found: " + embeddings.string());
    }
    if (!pretrained.empty() && !std::filesystem::exists(pretrained))
      fail(ErrorKind::MissingRoot, "model.pretrained not found: " + pretrained.string());
  }

  std::vector<std::pair<std::string, std::string>> to_entries() const;
  std::string canonical_text() const {
    std::string out;
    for (const auto& [k, v] : to_entries()) out += k + " = " + v + "\n";
    return out;
  }
  std::string hash() const { return sha256_hex(canonical_text()); }
};

namespace run_config_detail {

inline std::string modality_name(Modality m) { return m == Modality::Image ? "image" : "text"; }

inline Modality parse_modality(const std::string& s) {
  if (s == "image") return Modality::Image;
  if (s == "text") return Modality::Text;
  fail(ErrorKind::ConfigError, "model.sides: unknown side '" + s + "' (expected image or text)");
}

inline std::string fc_name(std::optional<std::size_t> fc) { return fc ? std::to_string(*fc) : "none"; }

inline std::optional<std::size_t> parse_fc(const std::string& s, const std::string& what) {
  if (s == "none") return std::nullopt;
  const auto w = static_cast<std::size_t>(parse_unsigned(s, what));
  validate_fc_width(w);
  return w;
}

inline std::string path_text(const std::filesystem::path& p) { return p.empty() ? "none" : p.string(); }

inline std::filesystem::path resolve_path(const std::string& value, const std::filesystem::path& base) {
  if (value == "none" || value.empty()) return {};
  std::filesystem::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

template <std::size_t N>
std::array<double, N> parse_triple(const std::string& value, const std::string& what) {
  const auto v = parse_real_list(value, what);
  if (v.size() == 1) {
    std::array<double, N> out;
    out.fill(v[0]);
    return out;
  }
  if (v.size() != N) fail(ErrorKind::ConfigError, what + ": expected " + std::to_string(N) + " values");
  std::array<double, N> out;
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

}  // namespace run_config_detail

inline std::vector<std::pair<std::string, std::string>> RunConfig::to_entries() const {
  using namespace run_config_detail;
  auto size_list = [](const auto& v) { return format_list(v, [](auto x) { return std::to_string(x); }); };
  auto real_list = [](const auto& v) { return format_list(v, [](double x) { return format_real(x); }); };
  const bool fused = kind == ModelKind::Fused;
  std::vector<std::pair<std::string, std::string>> e{
      {"data.layout", layout_name(layout)},
      {"data.image_root", path_text(image_root)},
      {"data.text_root", path_text(text_root)},
      {"data.class_names", format_list(class_names, [](const std::string& s) { return s; })},
      {"split.seed", std::to_string(split_seed)},
      {"split.sizes", size_list(split_sizes)},
      {"split.stratified", split_stratified ? "true" : "false"},
      {"model.kind", fused ? "fused" : "text"},
      {"model.backbone", backbone_name(vision.backbone)},
      {"model.width", format_real(vision.width_multiplier)},
      {"model.sides", format_list(sides, [](Modality m) { return modality_name(m); })},
      {"model.alphas", real_list(alphas)},
      {"model.fc_width", fc_name(fc_width)},
      {"model.pretrained", path_text(pretrained)},
      {"vision.input_side", std::to_string(vision.input_side)},
      {"vision.channel_mean", channel_stats_auto ? "auto" : real_list(vision.channel_mean)},
      {"vision.channel_std", channel_stats_auto ? "auto" : real_list(vision.channel_std)},
      {"text.embeddings", path_text(embeddings)},
      {"text.embedding_dim", std::to_string(text.embedding_dim)},
      {"text.max_tokens", std::to_string(text.max_tokens)},
      {"text.windows", size_list(text.window_sizes)},
      {"text.filters", std::to_string(text.filters_per_window)},
      {"text.dropout", format_real(text.dropout)},
      {"text.oov", oov == OovPolicy::Zero ? "zero" : "strict"},
      {"train.max_epochs", std::to_string(train.max_epochs)},
      {"train.batch_size", std::to_string(train.batch_size)},
      {"train.momentum", format_real(train.momentum)},
      {"train.base_lr", format_real(train.base_lr)},
      {"train.schedule", schedule_name(train.schedule)},
      {"train.cache_base_features", train.cache_base_features ? "true" : "false"},
      {"sweep.fc_widths", format_list(sweep_fc_widths, [](auto fc) { return fc_name(fc); })},
      {"sweep.backbones", format_list(sweep_backbones, [](BackboneKind b) { return backbone_name(b); })},
      {"sweep.parallel", std::to_string(sweep_parallel)},
      {"ocr.engine", ocr.engine},
      {"ocr.language", ocr.language},
      {"ocr.threads", std::to_string(ocr.threads)},
      {"ocr.timeout_s", format_real(ocr.timeout_seconds)},
      {"seed", std::to_string(seed)},
      {"threads", std::to_string(threads)},
      {"out", path_text(out)},
  };
  return e;
}

/// Builds a RunConfig from parsed key-value pairs. Relative paths resolve
/// against `base_dir`. Unknown keys are rejected.
inline RunConfig run_config_from(const KvConfig& kv, const std::filesystem::path& base_dir) {
  using namespace run_config_detail;
  RunConfig c;
  auto with = [&](const char* key, auto&& apply) {
    if (auto v = kv.get(key)) apply(*v, std::string(key));
  };
  with("data.layout", [&](const std::string& v, const std::string&) { c.layout = parse_layout(v); });
  with("data.image_root", [&](const std::string& v, const std::string&) { c.image_root = resolve_path(v, base_dir); });
  with("data.text_root", [&](const std::string& v, const std::string&) { c.text_root = resolve_path(v, base_dir); });
  with("data.class_names", [&](const std::string& v, const std::string& k) { c.class_names = parse_list(v, k); });
  with("split.seed", [&](const std::string& v, const std::string& k) { c.split_seed = parse_unsigned(v, k); });
  with("split.sizes", [&](const std::string& v, const std::string& k) {
    const auto items = parse_list(v, k);
    if (items.size() != 3) fail(ErrorKind::ConfigError, k + ": expected [train, val, test]");
    for (std::size_t i = 0; i < 3; ++i) c.split_sizes[i] = static_cast<std::size_t>(parse_unsigned(items[i], k));
  });
  with("split.stratified", [&](const std::string& v, const std::string& k) { c.split_stratified = parse_bool(v, k); });
  with("model.kind", [&](const std::string& v, const std::string& k) {
    if (v == "fused") c.kind = ModelKind::Fused;
    else if (v == "text") c.kind = ModelKind::Text;
    else fail(ErrorKind::ConfigError, k + ": expected fused or text");
  });
  with("model.backbone", [&](const std::string& v, const std::string&) { c.vision.backbone = parse_backbone(v); });
  with("model.width", [&](const std::string& v, const std::string& k) { c.vision.width_multiplier = parse_real(v, k); });
  with("model.sides", [&](const std::string& v, const std::string& k) {
    c.sides.clear();
    for (const auto& s : parse_list(v, k)) c.sides.push_back(parse_modality(s));
  });
  with("model.alphas", [&](const std::string& v, const std::string& k) { c.alphas = parse_real_list(v, k); });
  with("model.fc_width", [&](const std::string& v, const std::string& k) { c.fc_width = parse_fc(v, k); });
  with("model.pretrained", [&](const std::string& v, const std::string&) { c.pretrained = resolve_path(v, base_dir); });
  with("vision.input_side", [&](const std::string& v, const std::string& k) {
    c.vision.input_side = static_cast<std::size_t>(parse_unsigned(v, k));
  });
  const auto mean = kv.get("vision.channel_mean");
  const auto stdv = kv.get("vision.channel_std");
  c.channel_stats_auto = (!mean || *mean == "auto") && (!stdv || *stdv == "auto");
  if (!c.channel_stats_auto) {
    if (!mean || !stdv || *mean == "auto" || *stdv == "auto")
      fail(ErrorKind::ConfigError, "vision.channel_mean and vision.channel_std must both be auto or both be given");
    c.vision.channel_mean = parse_triple<3>(*mean, "vision.channel_mean");
    c.vision.channel_std = parse_triple<3>(*stdv, "vision.channel_std");
  }
  with("text.embeddings", [&](const std::string& v, const std::string&) { c.embeddings = resolve_path(v, base_dir); });
  with("text.embedding_dim", [&](const std::string& v, const std::string& k) {
    c.text.embedding_dim = static_cast<std::size_t>(parse_unsigned(v, k));
  });
  with("text.max_tokens", [&](const std::string& v, const std::string& k) {
    c.text.max_tokens = static_cast<std::size_t>(parse_unsigned(v, k));
  });
  with("text.windows", [&](const std::string& v, const std::string& k) {
    c.text.window_sizes.clear();
    for (const auto& s : parse_list(v, k)) c.text.window_sizes.push_back(static_cast<std::size_t>(parse_unsigned(s, k)));
  });
  with("text.filters", [&](const std::string& v, const std::string& k) {
    c.text.filters_per_window = static_cast<std::size_t>(parse_unsigned(v, k));
  });
  with("text.dropout", [&](const std::string& v, const std::string& k) { c.text.dropout = parse_real(v, k); });
  with("text.oov", [&](const std::string& v, const std::string& k) {
    if (v == "zero") c.oov = OovPolicy::Zero;
    else if (v == "strict") c.oov = OovPolicy::Strict;
    else fail(ErrorKind::ConfigError, k + ": expected zero or strict");
  });
  with("train.max_epochs", [&](const std::string& v, const std::string& k) {
    c.train.max_epochs = static_cast<std::size_t>(parse_unsigned(v, k));
  });
  with("train.batch_size", [&](const std::string& v, const std::string& k) {
    c.train.batch_size = static_cast<std::size_t>(parse_unsigned(v, k));
  });
  with("train.momentum", [&](const std::string& v, const std::string& k) { c.train.momentum = parse_real(v, k); });
  with("train.base_lr", [&](const std::string& v, const std::string& k) { c.train.base_lr = parse_real(v, k); });
  with("train.schedule", [&](const std::string& v, const std::string&) { c.train.schedule = parse_schedule(v); });
  with("train.cache_base_features", [&](const std::string& v, const std::string& k) {
    c.train.cache_base_features = parse_bool(v, k);
  });
  with("sweep.fc_widths", [&](const std::string& v, const std::string& k) {
    c.sweep_fc_widths.clear();
    for (const auto& s : parse_list(v, k)) c.sweep_fc_widths.push_back(parse_fc(s, k));
  });
  with("sweep.backbones", [&](const std::string& v, const std::string& k) {
    c.sweep_backbones.clear();
    for (const auto& s : parse_list(v, k)) c.sweep_backbones.push_back(parse_backbone(s));
  });
  with("sweep.parallel", [&](const std::string& v, const std::string& k) {
    c.sweep_parallel = static_cast<std::size_t>(parse_unsigned(v, k));
  });
  with("ocr.engine", [&](const std::string& v, const std::string&) { c.ocr.engine = v; });
  with("ocr.language", [&](const std::string& v, const std::string&) { c.ocr.language = v; });
  with("ocr.threads", [&](const std::string& v, const std::string& k) {
    c.ocr.threads = static_cast<std::size_t>(parse_unsigned(v, k));
  });
  with("ocr.timeout_s", [&](const std::string& v, const std::string& k) { c.ocr.timeout_seconds = parse_real(v, k); });
  with("seed", [&](const std::string& v, const std::string& k) { c.seed = parse_unsigned(v, k); });
  with("threads", [&](const std::string& v, const std::string& k) {
    c.threads = static_cast<std::size_t>(parse_unsigned(v, k));
  });
  with("out", [&](const std::string& v, const std::string&) { c.out = resolve_path(v, base_dir); });
  if (const auto unused = kv.unused_keys(); !unused.empty())
    fail(ErrorKind::ConfigError, kv.source() + ": unknown key '" + unused.front() + "'");
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  const auto kv = KvConfig::load(path);
  return run_config_from(kv, std::filesystem::absolute(path).parent_path());
}

}  // namespace sidetune
