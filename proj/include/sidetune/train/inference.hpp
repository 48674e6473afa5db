// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sidetune/data/ocr.hpp"
#include "sidetune/data/source.hpp"
#include "sidetune/fusion/fused_encoder.hpp"

namespace sidetune {

/// Wall-clock stage timings in milliseconds. Stages that did not run stay 0;
/// total also covers the head and bookkeeping.
struct TimingBreakdown {
  double ocr_ms = 0.0;
  double image_load_ms = 0.0;
  double text_load_ms = 0.0;
  double base_ms = 0.0;
  double side_image_ms = 0.0;
  double side_text_ms = 0.0;
  double total_ms = 0.0;
  std::size_t runs = 1;

  double stage_sum() const { return ocr_ms + image_load_ms + text_load_ms + base_ms + side_image_ms + side_text_ms; }

  TimingBreakdown& operator+=(const TimingBreakdown& o) {
    ocr_ms += o.ocr_ms;
    image_load_ms += o.image_load_ms;
    text_load_ms += o.text_load_ms;
    base_ms += o.base_ms;
    side_image_ms += o.side_image_ms;
    side_text_ms += o.side_text_ms;
    total_ms += o.total_ms;
    return *this;
  }

  TimingBreakdown averaged(std::size_t n) const {
    TimingBreakdown t = *this;
    const double k = 1.0 / static_cast<double>(n);
    for (double* v : {&t.ocr_ms, &t.image_load_ms, &t.text_load_ms, &t.base_ms, &t.side_image_ms, &t.side_text_ms,
                      &t.total_ms})
      *v *= k;
    t.runs = n;
    return t;
  }

  nlohmann::json to_json() const {
    return {{"ocr_ms", ocr_ms},         {"image_load_ms", image_load_ms}, {"text_load_ms", text_load_ms},
            {"base_ms", base_ms},       {"side_image_ms", side_image_ms}, {"side_text_ms", side_text_ms},
            {"total_ms", total_ms},     {"runs", runs}};
  }
};

struct DocumentInput {
  std::filesystem::path image;
  /// Pre-extracted text; when set, OCR is skipped.
  std::optional<std::filesystem::path> text_file;
};

struct Prediction {
  int label = 0;
  std::string class_name;
  std::vector<double> scores;
  std::size_t oov_tokens = 0;
  TimingBreakdown timing;
};

/// Single-document inference: OCR (or a supplied text file), decoding,
/// frozen-base and side forwards, merge and head, each stage timed.
template <typename T>
class InferenceSession {
 public:
  InferenceSession(Classifier<T>& model, InputSpec spec, const EmbeddingTable* table, OcrConfig ocr,
                   std::vector<std::string> class_names)
      : model_(model), spec_(std::move(spec)), table_(table), ocr_(std::move(ocr)), names_(std::move(class_names)) {
    if (names_.size() != model_.num_classes())
      fail(ErrorKind::CheckpointMismatch, "class list does not match the model");
  }

  Prediction predict(const DocumentInput& doc) {
    using clock = std::chrono::steady_clock;
    auto ms = [](clock::time_point a, clock::time_point b) {
      return std::chrono::duration<double, std::milli>(b - a).count();
    };
    const auto need = model_.modalities();
    const auto t0 = clock::now();
    Prediction p;
    Batch<T> batch;
    batch.labels = {0};
    if (need.text) {
      if (!table_) fail(ErrorKind::ConfigError, "model reads text but no embedding table is loaded");
      std::string text;
      if (doc.text_file) {
        const auto t = clock::now();
        text = read_text(*doc.text_file);
        p.timing.text_load_ms += ms(t, clock::now());
      } else {
        const auto r = run_ocr(doc.image, ocr_);
        text = r.text;
        p.timing.ocr_ms = r.duration_ms;
      }
      const auto t = clock::now();
      auto m = load_text_input<T>(text, *table_, spec_);
      p.oov_tokens = m.oov_count;
      batch.tokens = m.rows.reshaped(prepend_one(m.rows.shape()));
      p.timing.text_load_ms += ms(t, clock::now());
    }
    if (need.image) {
      const auto t = clock::now();
      auto img = load_image_input<T>(doc.image, spec_.vision);
      batch.images = img.reshaped(prepend_one(img.shape()));
      p.timing.image_load_ms = ms(t, clock::now());
    }

    Tensor<T> scores;
    if (auto* fused = dynamic_cast<FusedEncoder<T>*>(&model_)) {
      std::vector<Tensor<T>> enc;
      auto t = clock::now();
      enc.push_back(fused->encode_base(batch.images));
      p.timing.base_ms = ms(t, clock::now());
      for (std::size_t i = 0; i < fused->num_sides(); ++i) {
        t = clock::now();
        enc.push_back(fused->encode_side(i, batch, nn::Mode::Eval));
        const double d = ms(t, clock::now());
        (fused->side(i).encoder->modality() == Modality::Image ? p.timing.side_image_ms : p.timing.side_text_ms) += d;
      }
      scores = fused->fuse_and_classify(enc, nn::Mode::Eval);
    } else {
      const auto t = clock::now();
      scores = model_.forward(batch, nn::Mode::Eval);
      (need.image ? p.timing.side_image_ms : p.timing.side_text_ms) = ms(t, clock::now());
    }
    p.scores.assign(scores.values().begin(), scores.values().end());
    p.label = predict_classes(scores).at(0);
    p.class_name = names_.at(static_cast<std::size_t>(p.label));
    p.timing.total_ms = ms(t0, clock::now());
    return p;
  }

  /// Runs predict `runs` times and averages each stage.
  TimingBreakdown profile(const DocumentInput& doc, std::size_t runs = 5) {
    if (runs == 0) fail(ErrorKind::ConfigError, "profile needs at least one run");
    TimingBreakdown sum;
    for (std::size_t r = 0; r < runs; ++r) sum += predict(doc).timing;
    return sum.averaged(runs);
  }

 private:
  static Shape prepend_one(const Shape& s) {
    Shape out{1};
    out.insert(out.end(), s.begin(), s.end());
    return out;
  }

  static std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot read text file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  Classifier<T>& model_;
  InputSpec spec_;
  const EmbeddingTable* table_;
  OcrConfig ocr_;
  std::vector<std::string> names_;
};

}  // namespace sidetune
