// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sidetune/core/random.hpp"
#include "sidetune/vision/page_image.hpp"

namespace sidetune {

/// Small separable corpus for smoke tests and demos: every class has its own
/// dark band on the page and its own topic word in the text.
struct SyntheticCorpusSpec {
  std::size_t classes = 3;
  std::size_t per_class = 8;
  std::size_t height = 48;
  std::size_t width = 40;
  std::size_t embedding_dim = 16;
  std::size_t words_per_doc = 30;
  std::size_t vocabulary = 20;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::filesystem::path image_root;
  std::filesystem::path text_root;
  std::filesystem::path embeddings;
  std::vector<std::string> class_names;
};

inline std::string synthetic_class_name(std::size_t c) {
  static const char* names[] = {"ADVE", "Email", "Form", "Letter", "Memo", "News", "Note", "Report", "Resume", "Scientific"};
  return c < 10 ? names[c] : "class" + std::to_string(c);
}

/// Page for class `c`: light noisy background with a dark band whose vertical
/// position identifies the class.
inline PageImage synthetic_page(std::size_t c, std::size_t classes, std::size_t height, std::size_t width, Rng& rng) {
  PageImage page{height, width, std::vector<float>(height * width), {}};
  const std::size_t band = std::max<std::size_t>(height / classes, 1);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const bool dark = y / band == c && x >= width / 8 && x < width - width / 8;
      const double base = dark ? 0.15 : 0.9;
      page.pixels[y * width + x] = static_cast<float>(base + draw_uniform(rng, -0.08, 0.08));
    }
  return page;
}

/// Writes images/<class>/docNN.png, text/<class>/docNN.txt and embeddings.vec under `root`.
inline SyntheticCorpus write_synthetic_corpus(const std::filesystem::path& root, const SyntheticCorpusSpec& spec = {}) {
  namespace fs = std::filesystem;
  SyntheticCorpus out{root / "images", root / "text", root / "embeddings.vec", {}};
  Rng rng(spec.seed);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const auto name = synthetic_class_name(c);
    out.class_names.push_back(name);
    fs::create_directories(out.image_root / name);
    fs::create_directories(out.text_root / name);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "doc%03zu", i);
      save_page(synthetic_page(c, spec.classes, spec.height, spec.width, rng),
                out.image_root / name / (std::string(stem) + ".png"));
      std::ofstream txt(out.text_root / name / (std::string(stem) + ".txt"));
      for (std::size_t w = 0; w < spec.words_per_doc; ++w) {
        const double u = draw_unit(rng);
        if (u < 0.4) txt << "topic" << c;
        else if (u < 0.95) txt << "word" << draw_below(rng, spec.vocabulary);
        else txt << "unk" << draw_below(rng, 1000);
        txt << (w % 10 == 9 ? '\n' : ' ');
      }
    }
  }
  std::ofstream vec(out.embeddings);
  vec << spec.classes + spec.vocabulary << ' ' << spec.embedding_dim << '\n';
  auto row = [&](const std::string& token) {
    vec << token;
    for (std::size_t d = 0; d < spec.embedding_dim; ++d) vec << ' ' << draw_uniform(rng, -1.0, 1.0);
    vec << '\n';
  };
  for (std::size_t c = 0; c < spec.classes; ++c) row("topic" + std::to_string(c));
  for (std::size_t v = 0; v < spec.vocabulary; ++v) row("word" + std::to_string(v));
  return out;
}

/// Run configuration for a synthetic corpus with a small random-init
/// backbone and base_lr 0.01, suitable for CPU smoke runs.
inline std::string synthetic_run_config(const SyntheticCorpus& corpus, const SyntheticCorpusSpec& spec,
                                        const std::filesystem::path& out) {
  const std::size_t n = spec.classes * spec.per_class;
  const std::size_t val = n / 4, test = n / 4;
  std::string s;
  s += "data.layout = folder\n";
  s += "data.image_root = " + corpus.image_root.string() + "\n";
  s += "data.text_root = " + corpus.text_root.string() + "\n";
  s += "split.seed = 42\n";
  s += "split.sizes = [" + std::to_string(n - val - test) + ", " + std::to_string(val) + ", " + std::to_string(test) + "]\n";
  s += "model.kind = fused\n";
  s += "model.backbone = mobilenet_v2\n";
  s += "model.width = 0.25\n";
  s += "model.sides = [image, text]\n";
  s += "model.alphas = [0.2, 0.3, 0.5]\n";
  s += "model.fc_width = 512\n";
  s += "vision.input_side = 32\n";
  s += "text.embeddings = " + corpus.embeddings.string() + "\n";
  s += "text.embedding_dim = " + std::to_string(spec.embedding_dim) + "\n";
  s += "text.max_tokens = 40\n";
  s += "text.windows = [3, 4, 5]\n";
  s += "text.filters = 8\n";
  s += "text.dropout = 0.5\n";
  s += "train.max_epochs = 3\n";
  s += "train.batch_size = 4\n";
  s += "train.momentum = 0.9\n";
  s += "train.base_lr = 0.01\n";
  s += "seed = 1\n";
  s += "out = " + out.string() + "\n";
  return s;
}

}  // namespace sidetune
