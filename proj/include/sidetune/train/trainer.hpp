// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sidetune/data/source.hpp"
#include "sidetune/fusion/head.hpp"
#include "sidetune/nn/archive.hpp"
#include "sidetune/train/loss.hpp"
#include "sidetune/train/metrics.hpp"
#include "sidetune/train/schedule.hpp"
#include "sidetune/train/sgd.hpp"

namespace sidetune {

/// Frozen-base encodings per sample index. Valid because the base never
/// changes and inputs are not augmented.
template <typename T>
class BaseFeatureCache {
 public:
  explicit BaseFeatureCache(std::size_t n = 0) : rows_(n) {}

  bool has_all(std::span<const std::size_t> idx) const {
    return std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return !rows_.at(i).empty(); });
  }

  void store(std::span<const std::size_t> idx, const Tensor<T>& encodings) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto r = encodings.row(k);
      rows_.at(idx[k]).assign(r.begin(), r.end());
    }
  }

  Tensor<T> gather(std::span<const std::size_t> idx) const {
    const std::size_t dim = rows_.at(idx.front()).size();
    Tensor<T> out({idx.size(), dim});
    for (std::size_t k = 0; k < idx.size(); ++k) std::copy(rows_[idx[k]].begin(), rows_[idx[k]].end(), out.data() + k * dim);
    return out;
  }

 private:
  std::vector<std::vector<T>> rows_;
};

/// Loads a batch and attaches frozen-base encodings, computing them only for
/// batches not yet cached. Fully cached batches skip image decoding unless a
/// side consumes images.
template <typename T>
Batch<T> prepare_batch(Classifier<T>& model, const SampleSource<T>& source, std::span<const std::size_t> idx,
                       std::size_t workers, BaseFeatureCache<T>* cache) {
  const bool cached = model.has_frozen_base() && cache && cache->has_all(idx);
  auto batch = make_batch(source, idx, cached ? model.side_modalities() : model.modalities(), workers);
  if (model.has_frozen_base()) {
    if (cached) {
      batch.base_encodings = cache->gather(idx);
    } else {
      batch.base_encodings = model.encode_base(batch.images);
      if (cache) cache->store(idx, batch.base_encodings);
    }
  }
  return batch;
}

struct EvalOutput {
  EvalReport report;
  std::vector<int> predictions;
  double loss = 0.0;
};

/// Inference-mode pass over every sample, in order.
template <typename T>
EvalOutput evaluate(Classifier<T>& model, const SampleSource<T>& source, const std::vector<std::string>& class_names,
                    std::size_t batch_size = 16, std::size_t workers = 1, BaseFeatureCache<T>* cache = nullptr) {
  if (source.size() == 0) fail(ErrorKind::EmptyEvalSet, "evaluation set is empty");
  if (class_names.size() != model.num_classes())
    fail(ErrorKind::DimensionMismatch, std::to_string(class_names.size()) + " class names for a " +
                                           std::to_string(model.num_classes()) + "-class model");
  batch_size = std::max<std::size_t>(batch_size, 1);
  EvalOutput out;
  std::vector<int> labels;
  std::vector<std::size_t> idx;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < source.size(); start += batch_size) {
    idx.resize(std::min(batch_size, source.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = prepare_batch(model, source, idx, workers, cache);
    const auto scores = model.forward(batch, nn::Mode::Eval);
    loss_sum += cross_entropy(scores, batch.labels).loss * static_cast<double>(batch.size());
    const auto pred = predict_classes(scores);
    out.predictions.insert(out.predictions.end(), pred.begin(), pred.end());
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
  }
  out.loss = loss_sum / static_cast<double>(source.size());
  out.report = EvalReport::from_predictions(labels, out.predictions, class_names);
  return out;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double lr_first = 0.0;
  double lr_last = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_accuracy;
  std::string base_hash_before;
  std::string base_hash_after;

  bool base_unchanged() const { return base_hash_before == base_hash_after; }
};

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called with the new best weights in place.
  std::function<void(const EpochRecord&)> on_best;
  /// Called with the last finite (epoch-start) weights restored, before DivergedLoss is raised.
  std::function<void(std::size_t epoch)> on_diverged;
};

namespace train_detail {

/// Everything training may change: trainable weights and side normalization buffers.
template <typename T>
std::vector<nn::Parameter<T>*> mutable_state(Classifier<T>& model) {
  std::set<const nn::Parameter<T>*> frozen;
  for (auto& np : model.frozen_parameters()) frozen.insert(np.param);
  std::vector<nn::Parameter<T>*> out;
  for (auto& np : model.parameters())
    if (!frozen.count(np.param)) out.push_back(np.param);
  return out;
}

template <typename T>
std::vector<Tensor<T>> snapshot(const std::vector<nn::Parameter<T>*>& state) {
  std::vector<Tensor<T>> out;
  out.reserve(state.size());
  for (const auto* p : state) out.push_back(p->value);
  return out;
}

template <typename T>
void restore(const std::vector<nn::Parameter<T>*>& state, const std::vector<Tensor<T>>& values) {
  for (std::size_t i = 0; i < state.size(); ++i) state[i]->value = values[i];
}

template <typename T>
std::string frozen_hash(Classifier<T>& model) {
  return model.has_frozen_base() ? nn::parameter_hash(model.frozen_parameters()) : std::string{};
}

}  // namespace train_detail

/// Minibatch SGD with momentum and the per-iteration square-root schedule
/// (fractional epoch = completed minibatches / minibatches per epoch). With a
/// validation source the weights with the best validation accuracy are
/// restored at the end; otherwise the final weights are kept.
template <typename T>
TrainResult train(Classifier<T>& model, const SampleSource<T>& train_source, const SampleSource<T>* val_source,
                  const TrainConfig& cfg, const std::vector<std::string>& class_names, const TrainCallbacks& cb = {}) {
  using clock = std::chrono::steady_clock;
  cfg.validate();
  if (train_source.size() == 0) fail(ErrorKind::EmptyCorpus, "training set is empty");
  const bool has_val = val_source && val_source->size() > 0;

  TrainResult result;
  result.base_hash_before = train_detail::frozen_hash(model);
  const auto state = train_detail::mutable_state(model);
  SgdMomentum<T> opt(model.trainable_parameters(), cfg.momentum);
  Rng rng(cfg.seed);

  const std::size_t n = train_source.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::optional<BaseFeatureCache<T>> train_cache, val_cache;
  if (cfg.cache_base_features && model.has_frozen_base()) {
    train_cache.emplace(n);
    if (has_val) val_cache.emplace(val_source->size());
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor<T>> best_state;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto started = clock::now();
    const auto epoch_start_state = train_detail::snapshot(state);
    shuffle_in_place(std::span<std::size_t>(order), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::span<const std::size_t> idx(order.data() + b * cfg.batch_size,
                                             std::min(cfg.batch_size, n - b * cfg.batch_size));
      const double lr = lr_at(static_cast<double>(epoch * batches + b) / static_cast<double>(batches), cfg);
      if (b == 0) rec.lr_first = lr;
      rec.lr_last = lr;
      const auto batch = prepare_batch(model, train_source, idx, cfg.workers, train_cache ? &*train_cache : nullptr);
      model.zero_grad();
      const auto scores = model.forward(batch, nn::Mode::Train);
      const auto loss = cross_entropy(scores, batch.labels);
      if (!std::isfinite(loss.loss) || !scores.all_finite()) {
        train_detail::restore(state, epoch_start_state);
        if (cb.on_diverged) cb.on_diverged(epoch);
        fail(ErrorKind::DivergedLoss, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                          std::to_string(b) + "; weights from the start of the epoch kept");
      }
      model.backward(loss.grad);
      opt.step(lr);
      loss_sum += loss.loss * static_cast<double>(idx.size());
      const auto pred = predict_classes(scores);
      for (std::size_t k = 0; k < pred.size(); ++k) correct += pred[k] == batch.labels[k];
    }
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (has_val) {
      const auto ev = evaluate(model, *val_source, class_names, cfg.batch_size, cfg.workers,
                               val_cache ? &*val_cache : nullptr);
      rec.val_loss = ev.loss;
      rec.val_accuracy = ev.report.overall_accuracy;
    }
    rec.seconds = std::chrono::duration<double>(clock::now() - started).count();
    result.history.push_back(rec);
    if (cb.on_epoch) cb.on_epoch(rec);
    const bool improved = has_val ? (!result.best_val_accuracy || *rec.val_accuracy > *result.best_val_accuracy)
                                  : epoch + 1 == cfg.max_epochs;
    if (improved) {
      result.best_epoch = epoch;
      result.best_val_accuracy = rec.val_accuracy;
      if (has_val) best_state = train_detail::snapshot(state);
      if (cb.on_best) cb.on_best(rec);
    }
  }
  if (has_val) train_detail::restore(state, best_state);
  result.base_hash_after = train_detail::frozen_hash(model);
  return result;
}

}  // namespace sidetune
