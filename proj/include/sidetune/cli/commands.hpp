// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sidetune/cli/kv_config.hpp"
#include "sidetune/cli/model_io.hpp"
#include "sidetune/cli/reports.hpp"
#include "sidetune/cli/run_config.hpp"
#include "sidetune/data/corpus.hpp"
#include "sidetune/data/source.hpp"
#include "sidetune/data/split.hpp"
#include "sidetune/train/inference.hpp"
#include "sidetune/train/sweep.hpp"
#include "sidetune/train/trainer.hpp"
#include "sidetune/vision/page_image.hpp"

namespace sidetune {

/// Flags shared by every command; set values override the config file.
struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> ocr_engine;
  std::optional<std::size_t> threads;
  std::optional<Schedule> schedule;
};

struct Console {
  std::ostream& out = std::cout;
  std::ostream& log = std::cerr;
};

inline void apply_overrides(RunConfig& cfg, const GlobalOptions& g) {
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.out = std::filesystem::absolute(*g.out).lexically_normal();
  if (g.ocr_engine) cfg.ocr.engine = *g.ocr_engine;
  if (g.threads) cfg.threads = *g.threads;
  if (g.schedule) cfg.train.schedule = *g.schedule;
}

inline RunConfig config_from_options(const GlobalOptions& g) {
  if (!g.config) fail(ErrorKind::ConfigError, "--config is required for this command");
  auto cfg = load_run_config(*g.config);
  apply_overrides(cfg, g);
  return cfg;
}

/// Corpus, split and (when needed) the embedding table for a configuration.
struct PreparedData {
  Corpus corpus;
  DatasetSplit split;
  std::unique_ptr<EmbeddingTable> table;
};

inline PreparedData prepare_data(const RunConfig& cfg, bool load_table = true) {
  PreparedData d;
  d.corpus = load_corpus(cfg.image_root, cfg.text_root, cfg.layout);
  if (!cfg.class_names.empty()) apply_class_names(d.corpus, cfg.class_names);
  if (d.corpus.fixed_split) {
    d.split = split_fixed(d.corpus);
  } else {
    d.split = split_random(d.corpus.samples, cfg.split_seed, cfg.split_sizes, cfg.split_stratified);
  }
  d.split.class_names = d.corpus.class_names;
  if (load_table && cfg.needs_text())
    d.table = std::make_unique<EmbeddingTable>(load_embeddings(cfg.embeddings, cfg.text.embedding_dim));
  return d;
}

/// Replaces `auto` channel statistics with values measured on the training images.
inline void resolve_channel_stats(RunConfig& cfg, const std::vector<DocumentSample>& train, std::size_t workers) {
  if (!cfg.channel_stats_auto) return;
  if (cfg.kind == ModelKind::Fused) {
    std::vector<ChannelStatsAccumulator> parts(std::max<std::size_t>(workers, 1));
    const std::size_t w = parts.size();
    parallel_for(w, w, [&](std::size_t k) {
      for (std::size_t i = k; i < train.size(); i += w)
        parts[k].add(resize_and_replicate<float>(load_page(train[i].image_path), cfg.vision.input_side));
    });
    ChannelStatsAccumulator all;
    for (const auto& p : parts) all.merge(p);
    const auto stats = all.finish();
    cfg.vision.channel_mean = stats.mean;
    cfg.vision.channel_std = stats.std;
  }
  cfg.channel_stats_auto = false;
}

inline InputSpec input_spec(const RunConfig& cfg) { return {cfg.vision, cfg.text.max_tokens, cfg.oov}; }

/// manifest.cfg reloads to the same configuration hash; manifest.json adds run facts.
inline void write_manifest(const std::filesystem::path& dir, const RunConfig& cfg, const std::string& command,
                           nlohmann::json facts = nlohmann::json::object()) {
  write_file(dir / "manifest.cfg", "# sidetune " + command + " manifest, config hash " + cfg.hash() + "\n" +
                                       cfg.canonical_text());
  facts["command"] = command;
  facts["config_hash"] = cfg.hash();
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [k, v] : cfg.to_entries()) entries[k] = v;
  facts["config"] = entries;
  write_file(dir / "manifest.json", facts.dump(2) + "\n");
}

inline std::string model_label(const RunConfig& cfg) {
  if (cfg.kind == ModelKind::Text) return "text-cnn";
  return backbone_name(cfg.vision.backbone) + " " + fc_label(cfg.fc_width) + " alphas " +
         alpha_label(validate_alphas(cfg.alphas));
}

inline std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * fraction);
  return buf;
}

inline std::unique_ptr<nn::Archive> load_pretrained(const RunConfig& cfg) {
  if (cfg.pretrained.empty() || cfg.kind == ModelKind::Text) return nullptr;
  return std::make_unique<nn::Archive>(nn::read_archive(cfg.pretrained));
}

struct TrainOutcome {
  TrainResult result;
  std::filesystem::path checkpoint;
};

/// Builds, trains and checkpoints one model into cfg.out. `cfg` must have
/// resolved channel statistics.
inline TrainOutcome train_run(const RunConfig& cfg, const PreparedData& data, const nn::Archive* pretrained,
                              const Console& con, const std::string& tag = "") {
  const auto& names = data.split.class_names;
  auto model = build_model<float>(cfg, names.size(), pretrained);
  const auto spec = input_spec(cfg);
  CorpusSource<float> train_src(data.split.train, spec, data.table.get());
  CorpusSource<float> val_src(data.split.val, spec, data.table.get());
  const auto dir = cfg.out;
  TrainCallbacks cb;
  cb.on_epoch = [&](const EpochRecord& r) {
    con.log << tag << "epoch " << r.epoch + 1 << "/" << cfg.train.max_epochs << " lr " << format_real(r.lr_last)
            << " loss " << format_real(r.train_loss) << " acc " << percent(r.train_accuracy);
    if (r.val_accuracy) con.log << " val_loss " << format_real(*r.val_loss) << " val_acc " << percent(*r.val_accuracy);
    con.log << "\n";
  };
  cb.on_diverged = [&](std::size_t epoch) {
    save_checkpoint(dir / "diverged.ckpt", cfg, names, *model, {{"diverged_at_epoch", epoch}});
    con.log << tag << "loss diverged in epoch " << epoch + 1 << "; last finite weights saved to "
            << (dir / "diverged.ckpt").string() << "\n";
  };
  TrainOutcome outcome;
  outcome.result = train(*model, train_src, val_src.size() ? &val_src : nullptr, cfg.train_config(), names, cb);
  const auto& r = outcome.result;
  nlohmann::json summary{{"best_epoch", r.best_epoch},
                         {"epochs", r.history.size()},
                         {"base_hash_before", r.base_hash_before},
                         {"base_hash_after", r.base_hash_after},
                         {"base_unchanged", r.base_unchanged()},
                         {"train_oov_tokens", train_src.oov_tokens()}};
  summary["best_val_accuracy"] = r.best_val_accuracy ? nlohmann::json(*r.best_val_accuracy) : nlohmann::json();
  outcome.checkpoint = dir / "checkpoint.ckpt";
  save_checkpoint(outcome.checkpoint, cfg, names, *model, summary);
  write_history(dir, r.history);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  if (!r.base_unchanged()) fail(ErrorKind::DimensionMismatch, "frozen base weights changed during training");
  return outcome;
}

inline nlohmann::json split_facts(const PreparedData& d) {
  return {{"class_names", d.split.class_names},
          {"split_sizes", {d.split.train.size(), d.split.val.size(), d.split.test.size()}},
          {"corpus_samples", d.corpus.samples.size()},
          {"missing_text", d.corpus.missing_text}};
}

inline int cmd_train(const GlobalOptions& g, const Console& con) {
  auto cfg = config_from_options(g);
  cfg.validate();
  cfg.check_paths();
  auto data = prepare_data(cfg);
  resolve_channel_stats(cfg, data.split.train, cfg.threads);
  write_manifest(cfg.out, cfg, "train", split_facts(data));
  const auto pretrained = load_pretrained(cfg);
  const auto outcome = train_run(cfg, data, pretrained.get(), con);
  con.out << "model: " << model_label(cfg) << "\n";
  if (outcome.result.best_val_accuracy)
    con.out << "best val accuracy: " << percent(*outcome.result.best_val_accuracy) << " (epoch "
            << outcome.result.best_epoch + 1 << ")\n";
  con.out << "base weights unchanged: " << outcome.result.base_hash_after.substr(0, 16) << "\n";
  con.out << "checkpoint: " << outcome.checkpoint.string() << "\n";
  return 0;
}

/// Evaluates a checkpoint on one split. Data settings come from --config when
/// given, otherwise from the checkpoint.
inline int cmd_eval(const GlobalOptions& g, const std::filesystem::path& checkpoint, const std::string& split_name,
                    const Console& con) {
  auto loaded = load_checkpoint<float>(checkpoint);
  const auto& model_cfg = loaded.info.config;
  RunConfig data_cfg = model_cfg;
  if (g.config) {
    data_cfg = load_run_config(*g.config);
    if (data_cfg.vision.backbone != model_cfg.vision.backbone || data_cfg.kind != model_cfg.kind)
      fail(ErrorKind::CheckpointMismatch, "checkpoint holds a " + model_label(model_cfg) +
                                              " model but the config describes " + model_label(data_cfg));
  }
  apply_overrides(data_cfg, g);
  if (!data_cfg.image_root.empty() || !data_cfg.text_root.empty()) data_cfg.check_paths();
  auto data = prepare_data(data_cfg, false);
  const auto& names = loaded.info.class_names;
  if (data.split.class_names.size() != names.size())
    fail(ErrorKind::CheckpointMismatch, "checkpoint has " + std::to_string(names.size()) + " classes, data has " +
                                            std::to_string(data.split.class_names.size()));
  if (data.split.class_names != names) fail(ErrorKind::CheckpointMismatch, "class names differ from the checkpoint");
  std::unique_ptr<EmbeddingTable> table;
  if (model_cfg.needs_text())
    table = std::make_unique<EmbeddingTable>(load_embeddings(data_cfg.embeddings, model_cfg.text.embedding_dim));
  const auto& part = data.split.part(split_name);
  CorpusSource<float> src(part, input_spec(model_cfg), table.get());
  const auto result =
      evaluate(*loaded.model, src, names, model_cfg.train.batch_size, std::max<std::size_t>(data_cfg.threads, 1));
  const auto dir = g.out ? data_cfg.out : checkpoint.parent_path() / ("eval-" + split_name);
  nlohmann::json context{{"checkpoint", checkpoint.filename().string()},
                         {"checkpoint_config_hash", loaded.info.config_hash},
                         {"split", split_name},
                         {"split_seed", data_cfg.split_seed},
                         {"loss", result.loss}};
  write_eval_report(dir, result.report, model_label(model_cfg), context);
  write_manifest(dir, data_cfg, "eval", {{"checkpoint", checkpoint.string()}, {"split", split_name}});
  con.out << "split: " << split_name << " (" << result.report.num_samples << " samples)\n";
  con.out << "overall accuracy: " << percent(result.report.overall_accuracy) << "\n";
  con.out << "report: " << (dir / "report.md").string() << "\n";
  return 0;
}

/// Alpha grid file: one configuration per line, e.g. `0.2, 0.3, 0.5` or `[0.2, 0.3, 0.5]`.
inline std::vector<std::vector<double>> load_alpha_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot read alpha grid " + path.string());
  std::vector<std::vector<double>> grid;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (KvConfig::trim(line).empty()) continue;
    grid.push_back(parse_real_list(line, path.filename().string() + ":" + std::to_string(n)));
  }
  if (grid.empty()) fail(ErrorKind::EmptyConfig, "alpha grid " + path.string() + " has no rows");
  return grid;
}

inline int cmd_sweep(const GlobalOptions& g, const std::optional<std::filesystem::path>& grid_path,
                     const Console& con) {
  auto cfg = config_from_options(g);
  if (cfg.kind != ModelKind::Fused) fail(ErrorKind::ConfigError, "sweep needs model.kind = fused");
  const auto grid = grid_path ? load_alpha_grid(*grid_path) : default_alpha_grid();
  const auto jobs = plan_sweep(grid, cfg.sweep_fc_widths, cfg.sweep_backbones, cfg.seed);
  for (const auto& job : jobs)
    if (job.alpha.size() != cfg.sides.size() + 1)
      fail(ErrorKind::ArityMismatch, "alpha grid rows need " + std::to_string(cfg.sides.size() + 1) +
                                         " coefficients for model.sides");
  if (cfg.sweep_backbones.size() > 1 && !cfg.pretrained.empty())
    fail(ErrorKind::ConfigError, "model.pretrained holds one architecture; sweep one backbone at a time");
  cfg.validate();
  cfg.check_paths();
  auto data = prepare_data(cfg);
  resolve_channel_stats(cfg, data.split.train, cfg.threads);
  nlohmann::json facts = split_facts(data);
  facts["grid"] = grid;
  facts["jobs"] = jobs.size();
  write_manifest(cfg.out, cfg, "sweep", facts);
  const auto pretrained = load_pretrained(cfg);
  const std::size_t parallel = std::min(cfg.sweep_parallel, jobs.size());
  const std::size_t inner_threads = std::max<std::size_t>(1, cfg.threads / parallel);
  const auto spec_base = cfg;

  const auto rows = sweep_alphas(
      jobs,
      [&](const SweepJob& job) {
        RunConfig jc = spec_base;
        jc.alphas.assign(job.alpha.values().begin(), job.alpha.values().end());
        jc.fc_width = job.fc_width;
        jc.vision.backbone = job.backbone;
        jc.seed = job.seed;
        jc.threads = inner_threads;
        char name[32];
        std::snprintf(name, sizeof(name), "job-%03zu", job.index);
        jc.out = spec_base.out / name;
        const std::string tag = std::string(name) + " ";
        con.log << tag << model_label(jc) << "\n";
        write_manifest(jc.out, jc, "train", split_facts(data));
        const auto outcome = train_run(jc, data, pretrained.get(), con, tag);
        auto loaded = load_checkpoint<float>(outcome.checkpoint);
        CorpusSource<float> test_src(data.split.test, input_spec(jc), data.table.get());
        const auto result = evaluate(*loaded.model, test_src, data.split.class_names, jc.train.batch_size, inner_threads);
        write_eval_report(jc.out / "eval-test", result.report, model_label(jc),
                          {{"checkpoint", outcome.checkpoint.filename().string()},
                           {"checkpoint_config_hash", jc.hash()},
                           {"split", "test"},
                           {"split_seed", jc.split_seed},
                           {"loss", result.loss}});
        con.log << tag << "test accuracy " << percent(result.report.overall_accuracy) << "\n";
        return result.report;
      },
      parallel);
  write_sweep(cfg.out, rows);
  const auto& best = best_row(rows);
  con.out << "jobs: " << rows.size() << "\n";
  con.out << "best: " << backbone_name(best.job.backbone) << " " << fc_label(best.job.fc_width) << " alphas "
          << alpha_label(best.job.alpha) << " test accuracy " << percent(best.report.overall_accuracy) << "\n";
  con.out << "table: " << (cfg.out / "sweep.tsv").string() << "\n";
  return 0;
}

struct PredictRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::optional<std::filesystem::path> text_file;
  std::size_t runs = 5;
  bool json = false;
};

inline std::string timing_line(const TimingBreakdown& t) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "ocr %.2f | image_load %.2f | text_load %.2f | base %.2f | side_image %.2f | side_text %.2f | "
                "total %.2f ms",
                t.ocr_ms, t.image_load_ms, t.text_load_ms, t.base_ms, t.side_image_ms, t.side_text_ms, t.total_ms);
  return buf;
}

struct Session {
  LoadedModel<float> loaded;
  std::unique_ptr<EmbeddingTable> table;
  RunConfig cfg;
  std::unique_ptr<InferenceSession<float>> session;
};

inline Session open_session(const GlobalOptions& g, const PredictRequest& req) {
  Session s{load_checkpoint<float>(req.checkpoint), nullptr, {}, nullptr};
  s.cfg = s.loaded.info.config;
  apply_overrides(s.cfg, g);
  if (s.cfg.needs_text())
    s.table = std::make_unique<EmbeddingTable>(load_embeddings(s.cfg.embeddings, s.cfg.text.embedding_dim));
  s.session = std::make_unique<InferenceSession<float>>(*s.loaded.model, input_spec(s.cfg), s.table.get(), s.cfg.ocr,
                                                        s.loaded.info.class_names);
  return s;
}

inline int cmd_predict(const GlobalOptions& g, const PredictRequest& req, const Console& con) {
  auto s = open_session(g, req);
  const auto p = s.session->predict({req.image, req.text_file});
  nlohmann::json j{{"image", req.image.string()},
                   {"label", p.label},
                   {"class", p.class_name},
                   {"scores", p.scores},
                   {"oov_tokens", p.oov_tokens},
                   {"timing", p.timing.to_json()}};
  if (g.out) write_file(s.cfg.out / "prediction.json", j.dump(2) + "\n");
  if (req.json) {
    con.out << j.dump() << "\n";
    return 0;
  }
  con.out << "class: " << p.class_name << " (" << p.label << ")\n";
  con.out << "scores: " << format_list(p.scores, [](double v) { return format_real(v); }) << "\n";
  con.out << "timing: " << timing_line(p.timing) << "\n";
  return 0;
}

inline int cmd_profile(const GlobalOptions& g, const PredictRequest& req, const Console& con) {
  auto s = open_session(g, req);
  const auto t = s.session->profile({req.image, req.text_file}, req.runs);
  auto j = t.to_json();
  if (g.out) write_file(s.cfg.out / "profile.json", j.dump(2) + "\n");
  if (req.json) {
    con.out << j.dump() << "\n";
    return 0;
  }
  con.out << "runs: " << t.runs << "\n";
  con.out << "average: " << timing_line(t) << "\n";
  if (t.total_ms > 0)
    con.out << "ocr share: " << percent(t.ocr_ms / t.total_ms) << "\n";
  return 0;
}

}  // namespace sidetune
