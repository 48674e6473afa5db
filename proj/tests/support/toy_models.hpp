// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "sidetune/fusion/fused_encoder.hpp"
#include "sidetune/nn/archive.hpp"
#include "sidetune/nn/layers.hpp"
#include "sidetune/text/text_cnn.hpp"

namespace sidetune::testing {

// Flatten + affine image encoder; small enough for exhaustive checks.
class ToyImageEncoder final : public Encoder<double> {
 public:
  ToyImageEncoder(std::size_t side, std::size_t dim) : in_(3 * side * side), linear_(in_, dim) {}
  Modality modality() const override { return Modality::Image; }
  std::size_t output_dim() const override { return linear_.out_features(); }
  std::string architecture() const override { return "toy"; }
  Tensor<double> forward(const Tensor<double>& x, nn::Mode mode) override {
    return linear_.forward(x.reshaped({x.dim(0), in_}), mode);
  }
  Tensor<double> backward(const Tensor<double>& g) override { return linear_.backward(g); }
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<double>>& out) override {
    linear_.collect_parameters(prefix, out);
  }
  void reset_parameters(Rng& rng) override { linear_.reset_parameters(rng); }

 private:
  std::size_t in_;
  nn::Linear<double> linear_;
};

inline TextEncoderConfig tiny_text() {
  TextEncoderConfig c;
  c.window_sizes = {2, 3};
  c.filters_per_window = 3;
  c.embedding_dim = 4;
  c.max_tokens = 7;
  c.dropout = 0.0;
  return c;
}

inline std::unique_ptr<FusedEncoder<double>> tiny_fused(std::vector<double> alphas, std::optional<std::size_t> fc, Rng& rng,
                                                 std::size_t dim = 5, std::size_t classes = 3) {
  auto base = std::make_unique<ToyImageEncoder>(4, dim);
  base->reset_parameters(rng);
  auto side = std::make_unique<ToyImageEncoder>(4, dim);
  nn::copy_state<double>(*base, *side);
  auto text = std::make_unique<TextCnn<double>>(tiny_text());
  text->reset_parameters(rng);
  std::vector<std::unique_ptr<Encoder<double>>> sides;
  sides.push_back(std::move(side));
  sides.push_back(std::move(text));
  return std::make_unique<FusedEncoder<double>>(std::move(base), std::move(sides), validate_alphas(alphas), fc, classes,
                                                rng);
}

}  // namespace sidetune::testing
