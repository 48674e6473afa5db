// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sidetune/core/parallel.hpp"
#include "sidetune/data/corpus.hpp"
#include "sidetune/fusion/encoder.hpp"
#include "sidetune/text/embedding.hpp"
#include "sidetune/text/tokenize.hpp"
#include "sidetune/vision/preprocess.hpp"

namespace sidetune {

/// One model-ready sample: a (3, S, S) image and/or a (max_tokens, k) token
/// matrix, each left empty when the model does not consume that modality.
template <typename T>
struct Example {
  Tensor<T> image;
  Tensor<T> tokens;
  int label = 0;
  std::size_t oov = 0;
};

/// Random-access supply of labelled examples.
template <typename T>
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual int label(std::size_t i) const = 0;
  virtual Example<T> load(std::size_t i, Modalities need) const = 0;
};

template <typename T>
class InMemorySource final : public SampleSource<T> {
 public:
  InMemorySource() = default;
  explicit InMemorySource(std::vector<Example<T>> examples) : examples_(std::move(examples)) {}

  void add(Example<T> e) { examples_.push_back(std::move(e)); }
  std::size_t size() const override { return examples_.size(); }
  int label(std::size_t i) const override { return examples_.at(i).label; }
  Example<T> load(std::size_t i, Modalities need) const override {
    Example<T> e = examples_.at(i);
    if (!need.image) e.image = Tensor<T>();
    if (!need.text) e.tokens = Tensor<T>();
    return e;
  }

 private:
  std::vector<Example<T>> examples_;
};

/// Settings shared by everything that turns documents into model inputs.
struct InputSpec {
  VisionConfig vision;
  std::size_t max_tokens = 500;
  OovPolicy oov = OovPolicy::Zero;
};

/// Page image -> preprocessed tensor.
template <typename T>
Tensor<T> load_image_input(const std::filesystem::path& path, const VisionConfig& vision) {
  return preprocess<T>(load_page(path), vision);
}

/// Raw OCR text -> embedded token matrix.
template <typename T>
TokenMatrix<T> load_text_input(std::string_view text, const EmbeddingTable& table, const InputSpec& spec) {
  return embed<T>(tokenize(text), table, spec.max_tokens, spec.oov);
}

/// Documents on disk, decoded and preprocessed on demand.
template <typename T>
class CorpusSource final : public SampleSource<T> {
 public:
  CorpusSource(std::vector<DocumentSample> samples, InputSpec spec, const EmbeddingTable* table)
      : samples_(std::move(samples)), spec_(std::move(spec)), table_(table) {}

  std::size_t size() const override { return samples_.size(); }
  int label(std::size_t i) const override { return samples_.at(i).label; }
  const DocumentSample& sample(std::size_t i) const { return samples_.at(i); }
  std::size_t oov_tokens() const noexcept { return oov_.load(); }

  Example<T> load(std::size_t i, Modalities need) const override {
    const auto& s = samples_.at(i);
    Example<T> e;
    e.label = s.label;
    if (need.image) e.image = load_image_input<T>(s.image_path, spec_.vision);
    if (need.text) {
      if (!table_) fail(ErrorKind::ConfigError, "text input requested but no embedding table is loaded");
      auto m = load_text_input<T>(s.load_text(), *table_, spec_);
      e.tokens = std::move(m.rows);
      e.oov = m.oov_count;
      oov_ += m.oov_count;
    }
    return e;
  }

 private:
  std::vector<DocumentSample> samples_;
  InputSpec spec_;
  const EmbeddingTable* table_;
  mutable std::atomic<std::size_t> oov_{0};
};

/// Loads and stacks the examples at `indices` (in order) on `workers` threads.
template <typename T>
Batch<T> make_batch(const SampleSource<T>& source, std::span<const std::size_t> indices, Modalities need,
                    std::size_t workers = 1) {
  std::vector<Example<T>> items(indices.size());
  parallel_for(indices.size(), workers, [&](std::size_t k) { items[k] = source.load(indices[k], need); });
  Batch<T> batch;
  std::vector<Tensor<T>> parts;
  parts.reserve(items.size());
  if (need.image) {
    for (auto& e : items) parts.push_back(std::move(e.image));
    batch.images = stack(std::span<const Tensor<T>>(parts));
    parts.clear();
  }
  if (need.text) {
    for (auto& e : items) parts.push_back(std::move(e.tokens));
    batch.tokens = stack(std::span<const Tensor<T>>(parts));
  }
  for (const auto& e : items) batch.labels.push_back(e.label);
  return batch;
}

}  // namespace sidetune
