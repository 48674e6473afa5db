// SPDX-License-Identifier: Apache-2.0
// sidetune command-line front end: train, eval, sweep, predict, profile.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sidetune/cli/commands.hpp"

namespace {

int report(std::string_view kind, const std::string& message, int code) {
  std::string line = message;
  for (auto& c : line)
    if (c == '\n') c = ' ';
  std::cerr << "error: " << kind << ": " << line << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sidetune;
  CLI::App app{"Train and run image+text document classifiers with a frozen base and trainable sides"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::string config, out, ocr_engine, schedule;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  auto* o_config = app.add_option("--config", config, "Run configuration file");
  auto* o_seed = app.add_option("--seed", seed, "Override the run seed");
  auto* o_out = app.add_option("--out", out, "Output directory");
  auto* o_ocr = app.add_option("--ocr-engine", ocr_engine, "OCR executable (name on PATH or path)");
  auto* o_threads = app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  auto* o_schedule =
      app.add_option("--schedule", schedule, "Learning-rate schedule")->check(CLI::IsMember({"printed", "inverted"}));

  auto* train = app.add_subcommand("train", "Train a model from a run configuration");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  auto* sweep = app.add_subcommand("sweep", "Train and test every alpha configuration of a grid");
  auto* predict = app.add_subcommand("predict", "Classify one document image");
  auto* profile = app.add_subcommand("profile", "Time the inference stages on one document");

  std::string checkpoint, split = "test", grid, image, text_file;
  eval->add_option("checkpoint,--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  sweep->add_option("--grid", grid, "Alpha grid file (one configuration per line); default grid when omitted");

  PredictRequest req;
  bool json = false;
  for (auto* sub : {predict, profile}) {
    sub->add_option("checkpoint,--checkpoint", checkpoint, "Checkpoint file")->required();
    sub->add_option("image,--image", image, "Document image")->required();
    sub->add_option("--text-file", text_file, "Pre-extracted text; skips OCR");
    sub->add_flag("--json", json, "Print one JSON object");
  }
  profile->add_option("--runs", req.runs, "Timed runs to average")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("ConfigError", e.what(), 2);
  }

  if (*o_config) g.config = config;
  if (*o_seed) g.seed = seed;
  if (*o_out) g.out = out;
  if (*o_ocr) g.ocr_engine = ocr_engine;
  if (*o_threads) g.threads = threads;
  if (*o_schedule) g.schedule = parse_schedule(schedule);
  req.checkpoint = checkpoint;
  req.image = image;
  if (!text_file.empty()) req.text_file = text_file;
  req.json = json;

  const Console con{std::cout, std::cerr};
  try {
    if (*train) return cmd_train(g, con);
    if (*eval) return cmd_eval(g, checkpoint, split, con);
    if (*sweep) return cmd_sweep(g, grid.empty() ? std::nullopt : std::optional<std::filesystem::path>(grid), con);
    if (*predict) return cmd_predict(g, req, con);
    if (*profile) return cmd_profile(g, req, con);
  } catch (const Error& e) {
    return report(e.name(), e.what(), e.exit_code());
  } catch (const std::filesystem::filesystem_error& e) {
    return report("IoError", e.what(), 3);
  } catch (const std::bad_alloc&) {
    return report("OutOfMemory", "allocation failed", 4);
  } catch (const std::exception& e) {
    return report("RuntimeError", e.what(), 4);
  }
  return 4;
}
