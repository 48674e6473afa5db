// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>

#include "sidetune/nn/archive.hpp"
#include "sidetune/vision/backbones.hpp"

using namespace sidetune;

namespace {

void check_parity(BackboneKind kind, const char* file) {
  const char* dir = std::getenv("SIDETUNE_PARITY_DIR");
  REQUIRE(dir);
  const auto archive = nn::read_archive(std::filesystem::path(dir) / file);
  const auto& x = archive.tensors.at("probe.input");
  const auto& expected = archive.tensors.at("probe.output");

  VisionConfig cfg;
  cfg.backbone = kind;
  cfg.input_side = x.dim(2);
  auto net = make_backbone<float>(cfg);
  nn::load_parameters(net->named_parameters(), archive);
  const auto y = net->forward(x, nn::Mode::Eval);
  REQUIRE(y.shape() == expected.shape());
  double max_abs = 0, scale = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    max_abs = std::max(max_abs, std::abs(static_cast<double>(y[i]) - expected[i]));
    scale = std::max(scale, std::abs(static_cast<double>(expected[i])));
  }
  INFO("max abs difference " << max_abs << " at output scale " << scale);
  CHECK(max_abs <= 1e-3 * std::max(1.0, scale));
}

}  // namespace

TEST_CASE("MobileNetV2 features match torchvision", "[parity]") { check_parity(BackboneKind::MobileNetV2, "mobilenet_v2.starch"); }

TEST_CASE("ResNet-50 features match torchvision", "[parity]") { check_parity(BackboneKind::ResNet50, "resnet50.starch"); }
