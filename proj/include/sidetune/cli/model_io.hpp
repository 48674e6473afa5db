// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sidetune/cli/run_config.hpp"
#include "sidetune/fusion/fused_encoder.hpp"
#include "sidetune/nn/archive.hpp"
#include "sidetune/text/text_cnn.hpp"
#include "sidetune/vision/backbones.hpp"

namespace sidetune {

inline constexpr const char* kCheckpointFormat = "sidetune-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// "<file name> sha256:<first 16 hex digits>" of a weights file.
inline std::string file_identifier(const std::filesystem::path& path) {
  if (path.empty()) return "none";
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return path.filename().string() + " sha256:" + h.hex_digest().substr(0, 16);
}

/// Embedding tables can be several gigabytes; identified by name and size.
inline std::string embedding_identifier(const std::filesystem::path& path) {
  if (path.empty()) return "none";
  return path.filename().string() + " bytes:" + std::to_string(std::filesystem::file_size(path));
}

/// Builds the configured classifier. Image sides start from the same weights
/// as the base (pre-trained when an archive is given, otherwise seeded random).
template <typename T>
std::unique_ptr<Classifier<T>> build_model(const RunConfig& cfg, std::size_t num_classes, const nn::Archive* pretrained) {
  cfg.validate();
  Rng rng(cfg.seed);
  TextEncoderConfig text_cfg = cfg.text;
  text_cfg.num_classes = num_classes;
  const std::uint64_t dropout_seed = cfg.seed * 0x9E3779B97F4A7C15ull + 1;
  if (cfg.kind == ModelKind::Text) return std::make_unique<TextClassifier<T>>(text_cfg, rng, dropout_seed);

  auto pair = make_backbone_pair<T>(cfg.vision, pretrained, rng);
  std::vector<std::unique_ptr<Encoder<T>>> sides;
  for (auto m : cfg.sides) {
    if (m == Modality::Image) {
      if (pair.side) {
        sides.push_back(std::move(pair.side));
      } else {
        auto extra = make_backbone<T>(cfg.vision);
        nn::copy_state<T>(*pair.base, *extra);
        sides.push_back(std::move(extra));
      }
    } else {
      auto text = std::make_unique<TextCnn<T>>(text_cfg, dropout_seed + sides.size());
      text->reset_parameters(rng);
      sides.push_back(std::move(text));
    }
  }
  return std::make_unique<FusedEncoder<T>>(std::move(pair.base), std::move(sides), validate_alphas(cfg.alphas),
                                           cfg.fc_width, num_classes, rng);
}

struct CheckpointInfo {
  RunConfig config;
  std::vector<std::string> class_names;
  std::string config_hash;
  nlohmann::json metadata;
};

/// Single file: every parameter (frozen base included) plus the resolved
/// configuration, class map, split seed and weight-source identifiers.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg,
                     const std::vector<std::string>& class_names, Classifier<T>& model,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  nn::Archive a;
  auto& m = a.metadata;
  m["format"] = kCheckpointFormat;
  m["version"] = kCheckpointVersion;
  auto config = nlohmann::json::array();
  for (const auto& [k, v] : cfg.to_entries()) config.push_back({k, v});
  m["config"] = config;
  m["config_hash"] = cfg.hash();
  m["class_names"] = class_names;
  m["num_classes"] = class_names.size();
  m["split_seed"] = cfg.split_seed;
  m["model_kind"] = cfg.kind == ModelKind::Fused ? "fused" : "text";
  m["backbone"] = backbone_name(cfg.vision.backbone);
  m["backbone_weights"] = cfg.pretrained.empty() ? "random-init seed " + std::to_string(cfg.seed)
                                                 : file_identifier(cfg.pretrained);
  m["embeddings"] = embedding_identifier(cfg.needs_text() ? cfg.embeddings : std::filesystem::path{});
  if (model.has_frozen_base()) m["base_hash"] = nn::parameter_hash(model.frozen_parameters());
  m["extra"] = extra;
  nn::store_parameters(model.parameters(), a);
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  nn::write_archive(path, a);
}

inline CheckpointInfo checkpoint_info(const nn::Archive& a, const std::filesystem::path& path) {
  const auto& m = a.metadata;
  if (!m.is_object() || m.value("format", "") != kCheckpointFormat)
    fail(ErrorKind::CheckpointMismatch, path.string() + " is not a checkpoint");
  if (m.value("version", 0) != kCheckpointVersion)
    fail(ErrorKind::CheckpointMismatch, path.string() + ": unsupported checkpoint version");
  KvConfig kv;
  for (const auto& entry : m.at("config")) kv.set(entry.at(0).get<std::string>(), entry.at(1).get<std::string>());
  CheckpointInfo info;
  info.config = run_config_from(kv, {});
  info.class_names = m.at("class_names").get<std::vector<std::string>>();
  info.config_hash = m.at("config_hash").get<std::string>();
  info.metadata = m;
  if (info.config.hash() != info.config_hash)
    fail(ErrorKind::CheckpointMismatch, path.string() + ": stored configuration does not match its hash");
  return info;
}

template <typename T>
struct LoadedModel {
  CheckpointInfo info;
  std::unique_ptr<Classifier<T>> model;
};

template <typename T>
LoadedModel<T> load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) fail(ErrorKind::IoError, "checkpoint not found: " + path.string());
  const auto archive = nn::read_archive(path);
  LoadedModel<T> out{checkpoint_info(archive, path), nullptr};
  out.model = build_model<T>(out.info.config, out.info.class_names.size(), nullptr);
  nn::load_parameters(out.model->parameters(), archive);
  if (out.model->has_frozen_base() && out.info.metadata.contains("base_hash") &&
      nn::parameter_hash(out.model->frozen_parameters()) != out.info.metadata["base_hash"].template get<std::string>())
    fail(ErrorKind::CheckpointMismatch, path.string() + ": base weights do not match the recorded hash");
  return out;
}

}  // namespace sidetune
