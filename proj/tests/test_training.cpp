// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <set>

#include "sidetune/cli/kv_config.hpp"
#include "sidetune/cli/model_io.hpp"
#include "sidetune/cli/run_config.hpp"
#include "sidetune/data/source.hpp"
#include "sidetune/train/loss.hpp"
#include "sidetune/train/metrics.hpp"
#include "sidetune/train/schedule.hpp"
#include "sidetune/train/sgd.hpp"
#include "sidetune/train/sweep.hpp"
#include "sidetune/train/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_models.hpp"

using namespace sidetune;
using sidetune::testing::tiny_fused;

namespace {

auto kind_is(ErrorKind k) {
  return Catch::Matchers::Predicate<Error>([k](const Error& e) { return e.kind() == k; }, "error kind");
}

/// Three classes; the class shows up as a bright image channel and a marked
/// embedding dimension on every token.
InMemorySource<double> separable_source(std::size_t n, Rng& rng) {
  InMemorySource<double> src;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = i % 3;
    Example<double> e;
    e.label = static_cast<int>(c);
    e.image = Tensor<double>({3, 4, 4});
    for (std::size_t k = 0; k < e.image.size(); ++k)
      e.image[k] = draw_uniform(rng, -0.3, 0.3) + (k / 16 == c ? 1.0 : 0.0);
    e.tokens = Tensor<double>({7, 4});
    for (std::size_t t = 0; t < 7; ++t)
      for (std::size_t d = 0; d < 4; ++d) e.tokens[t * 4 + d] = draw_uniform(rng, -0.3, 0.3) + (d == c ? 1.0 : 0.0);
    src.add(std::move(e));
  }
  return src;
}

const std::vector<std::string> kThree{"a", "b", "c"};

TrainConfig small_train(std::size_t epochs = 30) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.batch_size = 8;
  t.base_lr = 0.1;
  t.seed = 5;
  return t;
}

}  // namespace

TEST_CASE("momentum SGD matches the hand-computed update", "[train]") {
  nn::Parameter<double> p({3});
  nn::Parameter<double> frozen({2}, false);
  p.value = Tensor<double>({3});
  p.value[0] = 1.0, p.value[1] = -2.0, p.value[2] = 0.5;
  SgdMomentum<double> opt({{"p", &p}, {"f", &frozen}}, 0.9);
  CHECK(opt.num_parameters() == 1);
  const double g1[3] = {0.1, -0.2, 0.3};
  const double g2[3] = {-0.5, 0.0, 0.25};
  for (int k = 0; k < 3; ++k) p.grad[k] = g1[k];
  opt.step(0.1);
  for (int k = 0; k < 3; ++k) p.grad[k] = g2[k];
  opt.step(0.05);
  const double start[3] = {1.0, -2.0, 0.5};
  for (int k = 0; k < 3; ++k) {
    const double v1 = g1[k];
    const double v2 = 0.9 * v1 + g2[k];
    CHECK(p.value[k] == Catch::Approx(start[k] - 0.1 * v1 - 0.05 * v2).margin(1e-15));
    CHECK(opt.velocity()[0][k] == Catch::Approx(v2).margin(1e-15));
  }
  opt.reset();
  CHECK(opt.velocity()[0][0] == 0.0);
}

TEST_CASE("cross-entropy values and gradient", "[train]") {
  for (std::size_t c : {2u, 3u, 10u, 16u}) {
    const Tensor<double> scores({4, c}, 0.7);
    const std::vector<int> labels{0, 1, 1, 0};
    const auto r = cross_entropy(scores, labels);
    CHECK(r.loss == Catch::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
    CHECK(r.grad[0] == Catch::Approx((1.0 / static_cast<double>(c) - 1.0) / 4.0));
  }
  Tensor<double> big({1, 2});
  big[0] = 1000.0;
  CHECK(cross_entropy(big, std::vector<int>{0}).loss == Catch::Approx(0.0).margin(1e-12));
  CHECK(std::isfinite(cross_entropy(big, std::vector<int>{1}).loss));
  CHECK(cross_entropy(big, std::vector<int>{1}).loss == Catch::Approx(1000.0));

  Rng rng(3);
  auto s = testing::random_tensor({5, 4}, rng);
  const std::vector<int> labels{3, 0, 2, 2, 1};
  const auto r = cross_entropy(s, labels);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double h = 1e-6, saved = s[k];
    s[k] = saved + h;
    const double up = cross_entropy(s, labels).loss;
    s[k] = saved - h;
    const double down = cross_entropy(s, labels).loss;
    s[k] = saved;
    REQUIRE(r.grad[k] == Catch::Approx((up - down) / (2 * h)).margin(1e-8));
  }
  CHECK_THROWS_MATCHES(cross_entropy(s, std::vector<int>{1}), Error, kind_is(ErrorKind::DimensionMismatch));
}

TEST_CASE("learning-rate schedule identities", "[train]") {
  TrainConfig t;
  t.max_epochs = 100;
  t.base_lr = 0.1;
  CHECK(lr_at(0, t) == 0.0);
  CHECK(lr_at(100, t) == Catch::Approx(0.1));
  CHECK(lr_at(25, t) == Catch::Approx(0.05));
  double prev = -1;
  for (double e = 0; e <= 100; e += 0.5) {
    const double lr = lr_at(e, t);
    CHECK(lr >= prev);
    CHECK(lr == Catch::Approx(0.1 * std::sqrt(e / 100)).margin(1e-15));
    prev = lr;
  }
  TrainConfig inv = t;
  inv.schedule = Schedule::Inverted;
  for (double e = 0; e <= 100; e += 7.25) CHECK(lr_at(e, inv) == Catch::Approx(lr_at(100 - e, t)).margin(1e-15));
  CHECK(lr_at(0, inv) == Catch::Approx(0.1));
  CHECK_THROWS_MATCHES(lr_at(101, t), Error, kind_is(ErrorKind::OutOfRange));
  CHECK_THROWS_MATCHES(lr_at(-0.5, t), Error, kind_is(ErrorKind::OutOfRange));
  CHECK(parse_schedule("inverted") == Schedule::Inverted);
  CHECK_THROWS_MATCHES(parse_schedule("cosine"), Error, kind_is(ErrorKind::ConfigError));
  t.momentum = 1.0;
  CHECK_THROWS_MATCHES(t.validate(), Error, kind_is(ErrorKind::ConfigError));
}

TEST_CASE("training overfits a separable set and leaves the base untouched", "[train]") {
  Rng rng(11);
  auto model = tiny_fused({0.2, 0.3, 0.5}, std::size_t{512}, rng);
  Rng data_rng(12);
  const auto train_src = separable_source(32, data_rng);
  const auto base_before = nn::parameter_hash(model->frozen_parameters());
  std::size_t epochs_seen = 0;
  TrainCallbacks cb;
  cb.on_epoch = [&](const EpochRecord& r) { CHECK(r.epoch == epochs_seen++); };
  const auto result = train<double>(*model, train_src, nullptr, small_train(), kThree, cb);
  CHECK(epochs_seen == 30);
  CHECK(result.base_unchanged());
  CHECK(nn::parameter_hash(model->frozen_parameters()) == base_before);
  CHECK(result.history.front().lr_first == 0.0);
  CHECK(result.history.back().lr_last == Catch::Approx(0.1 * std::sqrt((30.0 * 4 - 1) / 120.0)));
  CHECK(result.history.back().train_loss < result.history.front().train_loss);
  const auto ev = evaluate<double>(*model, train_src, kThree, 5);
  CHECK(ev.report.overall_accuracy == 1.0);
  CHECK(ev.report.num_samples == 32);
}

TEST_CASE("training is deterministic for a fixed seed", "[train]") {
  auto run = [](std::uint64_t seed) {
    Rng rng(21);
    auto model = tiny_fused({0.3, 0.3, 0.4}, std::nullopt, rng);
    Rng data_rng(22);
    const auto src = separable_source(20, data_rng);
    Rng val_rng(23);
    const auto val = separable_source(9, val_rng);
    auto cfg = small_train(6);
    cfg.seed = seed;
    const auto r = train<double>(*model, src, &val, cfg, kThree);
    return std::pair{nn::parameter_hash(model->parameters()), r.history.back().train_loss};
  };
  const auto a = run(1), b = run(1), c = run(2);
  CHECK(a == b);
  CHECK(a.first != c.first);
}

TEST_CASE("best validation weights are restored", "[train]") {
  Rng rng(31);
  auto model = tiny_fused({0.2, 0.4, 0.4}, std::size_t{512}, rng);
  Rng data_rng(32);
  const auto src = separable_source(24, data_rng);
  const auto val = separable_source(12, data_rng);
  std::string best_hash;
  TrainCallbacks cb;
  cb.on_best = [&](const EpochRecord&) { best_hash = nn::parameter_hash(model->parameters()); };
  const auto r = train<double>(*model, src, &val, small_train(8), kThree, cb);
  REQUIRE(r.best_val_accuracy);
  double best = 0;
  for (const auto& h : r.history) best = std::max(best, *h.val_accuracy);
  CHECK(*r.best_val_accuracy == best);
  CHECK(*r.history.at(r.best_epoch).val_accuracy == best);
  CHECK(nn::parameter_hash(model->parameters()) == best_hash);
  CHECK(evaluate<double>(*model, val, kThree).report.overall_accuracy == best);
}

TEST_CASE("cached base encodings do not change evaluation", "[train]") {
  Rng rng(41);
  auto model = tiny_fused({0.2, 0.3, 0.5}, std::size_t{512}, rng);
  Rng data_rng(42);
  const auto src = separable_source(10, data_rng);
  BaseFeatureCache<double> cache(src.size());
  const auto plain = evaluate<double>(*model, src, kThree, 3);
  const auto first = evaluate<double>(*model, src, kThree, 3, 1, &cache);
  const auto second = evaluate<double>(*model, src, kThree, 3, 1, &cache);
  CHECK(plain.predictions == first.predictions);
  CHECK(first.predictions == second.predictions);
  CHECK(second.loss == Catch::Approx(plain.loss).epsilon(1e-12));
  CHECK_THROWS_MATCHES(evaluate<double>(*model, src, {"a", "b"}), Error, kind_is(ErrorKind::DimensionMismatch));
  CHECK_THROWS_MATCHES(evaluate<double>(*model, InMemorySource<double>{}, kThree), Error,
                       kind_is(ErrorKind::EmptyEvalSet));
}

TEST_CASE("diverging loss stops training with the epoch-start weights", "[train]") {
  Rng rng(51);
  auto model = tiny_fused({0.2, 0.3, 0.5}, std::size_t{512}, rng);
  Rng data_rng(52);
  const auto src = separable_source(16, data_rng);
  auto cfg = small_train(3);
  cfg.base_lr = 1e300;
  std::optional<std::size_t> diverged_at;
  std::string at_callback;
  TrainCallbacks cb;
  cb.on_diverged = [&](std::size_t e) {
    diverged_at = e;
    at_callback = nn::parameter_hash(model->parameters());
  };
  CHECK_THROWS_MATCHES(train<double>(*model, src, nullptr, cfg, kThree, cb), Error, kind_is(ErrorKind::DivergedLoss));
  REQUIRE(diverged_at);
  CHECK(nn::parameter_hash(model->parameters()) == at_callback);
  for (auto& np : model->parameters())
    for (double v : np.param->value.values()) REQUIRE(std::isfinite(v));
}

TEST_CASE("evaluation report consistency", "[metrics]") {
  Rng rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 2 + draw_below(rng, 8), n = 1 + draw_below(rng, 200);
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(draw_below(rng, c));
      p[i] = draw_unit(rng) < 0.6 ? y[i] : static_cast<int>(draw_below(rng, c));
    }
    std::vector<std::string> names;
    for (std::size_t k = 0; k < c; ++k) names.push_back("c" + std::to_string(k));
    const auto r = EvalReport::from_predictions(y, p, names);
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) correct += y[i] == p[i];
    for (const auto& row : r.confusion) total += std::accumulate(row.begin(), row.end(), std::size_t{0});
    REQUIRE(total == n);
    REQUIRE(r.num_samples == n);
    REQUIRE(r.overall_accuracy == static_cast<double>(correct) / static_cast<double>(n));
    for (std::size_t k = 0; k < c; ++k) {
      std::size_t in_class = 0, hit = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (static_cast<std::size_t>(y[i]) == k) ++in_class, hit += p[i] == y[i];
      if (in_class == 0) REQUIRE_FALSE(r.per_class_accuracy[k]);
      else REQUIRE(*r.per_class_accuracy[k] == static_cast<double>(hit) / static_cast<double>(in_class));
    }
    const auto back = EvalReport::from_json(nlohmann::json::parse(r.to_json().dump()));
    REQUIRE(back.confusion == r.confusion);
    REQUIRE(back.overall_accuracy == r.overall_accuracy);
    REQUIRE(back.to_markdown("m") == r.to_markdown("m"));
  }
  const auto r = EvalReport::from_predictions(std::vector<int>{0, 0}, std::vector<int>{0, 1}, {"x", "y"});
  CHECK(r.to_markdown("M").find("| M | 50.00 | 50.00 | - |") != std::string::npos);
  CHECK_THROWS_MATCHES(EvalReport::from_predictions(std::vector<int>{}, std::vector<int>{}, {"x"}), Error,
                       kind_is(ErrorKind::EmptyEvalSet));
  CHECK_THROWS_MATCHES(EvalReport::from_predictions(std::vector<int>{0}, std::vector<int>{2}, {"x", "y"}), Error,
                       kind_is(ErrorKind::OutOfRange));
}

TEST_CASE("sweep planning", "[sweep]") {
  const auto grid = default_alpha_grid();
  REQUIRE(grid.size() == 12);
  std::set<std::vector<double>> unique(grid.begin(), grid.end());
  CHECK(unique.size() == 12);
  for (std::size_t r = 0; r < grid.size(); ++r) {
    CHECK(grid[r][0] + grid[r][1] + grid[r][2] == Catch::Approx(1.0));
    for (double a : grid[r]) CHECK((a > 0.19 && a < 0.51));
    if (r > 0) CHECK(grid[r][2] >= grid[r - 1][2]);
  }
  const auto jobs = plan_sweep(grid, {std::nullopt, 512, 1024}, {BackboneKind::MobileNetV2}, 100);
  REQUIRE(jobs.size() == 36);
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    CHECK(jobs[j].index == j);
    CHECK(jobs[j].seed == 100 + j);
    CHECK(jobs[j].fc_width == (j < 12 ? std::nullopt : std::optional<std::size_t>(j < 24 ? 512 : 1024)));
    CHECK(std::ranges::equal(jobs[j].alpha.values(), grid[j % 12]));
  }
  const auto two = plan_sweep({{0.2, 0.3, 0.5}}, {std::nullopt}, {BackboneKind::MobileNetV2, BackboneKind::ResNet50}, 0);
  CHECK(two.at(1).backbone == BackboneKind::ResNet50);

  auto bad = grid;
  bad[4] = {0.5, 0.5, 0.5};
  CHECK_THROWS_MATCHES(plan_sweep(bad, {std::nullopt}, {BackboneKind::MobileNetV2}, 0), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.kind() == ErrorKind::ConstraintViolation &&
                                std::string(e.what()).find("row 5") != std::string::npos;
                       }));
  CHECK_THROWS_MATCHES(plan_sweep({}, {std::nullopt}, {BackboneKind::MobileNetV2}, 0), Error,
                       kind_is(ErrorKind::EmptyConfig));
  CHECK_THROWS_MATCHES(plan_sweep(grid, {std::size_t{0}}, {BackboneKind::MobileNetV2}, 0), Error,
                       kind_is(ErrorKind::InvalidWidth));

  std::size_t calls = 0;
  const auto rows = sweep_alphas(
      jobs,
      [&](const SweepJob& job) {
        ++calls;
        const int hit = job.index == 17 ? 1 : 0;
        return EvalReport::from_predictions(std::vector<int>{1}, std::vector<int>{hit}, {"x", "y"});
      },
      2);
  CHECK(calls == 36);
  for (std::size_t j = 0; j < rows.size(); ++j) CHECK(rows[j].job.index == j);
  CHECK(best_row(rows).job.index == 17);
}

TEST_CASE("key-value configuration parsing", "[config]") {
  const auto kv = KvConfig::parse("# header\na = 1\n  b=[x, y]  # note\n\n");
  CHECK(kv.get("a") == "1");
  CHECK(parse_list(*kv.get("b"), "b") == std::vector<std::string>{"x", "y"});
  CHECK_FALSE(kv.get("c"));
  CHECK_THROWS_MATCHES(KvConfig::parse("a = 1\na = 2\n"), Error, kind_is(ErrorKind::ConfigError));
  CHECK_THROWS_MATCHES(KvConfig::parse("just words\n"), Error, kind_is(ErrorKind::ConfigError));
  CHECK_THROWS_MATCHES(KvConfig::parse(" = 3\n"), Error, kind_is(ErrorKind::ConfigError));
  CHECK(parse_real("+0.25", "x") == 0.25);
  CHECK_THROWS_MATCHES(parse_real("0.2x", "x"), Error, kind_is(ErrorKind::ConfigError));
  CHECK_THROWS_MATCHES(parse_bool("maybe", "x"), Error, kind_is(ErrorKind::ConfigError));
  CHECK(parse_real(format_real(0.1 + 0.2), "x") == 0.1 + 0.2);
}

TEST_CASE("run configuration round trip and hashing", "[config]") {
  const std::string text =
      "data.image_root = imgs\n"
      "data.text_root = /abs/txt\n"
      "model.alphas = [0.3, 0.3, 0.4]\n"
      "model.fc_width = none\n"
      "vision.channel_mean = [0.5, 0.5, 0.5]\n"
      "vision.channel_std = [0.25, 0.25, 0.25]\n"
      "train.max_epochs = 7\n"
      "seed = 9\n";
  const auto cfg = run_config_from(KvConfig::parse(text), "/base");
  CHECK(cfg.image_root == "/base/imgs");
  CHECK(cfg.text_root == "/abs/txt");
  CHECK_FALSE(cfg.fc_width);
  CHECK_FALSE(cfg.channel_stats_auto);
  CHECK(cfg.train.max_epochs == 7);
  CHECK(cfg.train_config().seed == 9);
  CHECK_NOTHROW(cfg.validate());

  const auto again = run_config_from(KvConfig::parse(cfg.canonical_text()), {});
  CHECK(again.canonical_text() == cfg.canonical_text());
  CHECK(again.hash() == cfg.hash());
  CHECK(cfg.hash().size() == 64);

  auto changed = cfg;
  changed.seed = 10;
  CHECK(changed.hash() != cfg.hash());

  CHECK_THROWS_MATCHES(run_config_from(KvConfig::parse("model.alpha = [1]\n"), "/"), Error,
                       kind_is(ErrorKind::ConfigError));
  CHECK_THROWS_MATCHES(run_config_from(KvConfig::parse("vision.channel_mean = [1, 1, 1]\n"), "/"), Error,
                       kind_is(ErrorKind::ConfigError));
  CHECK_THROWS_MATCHES(run_config_from(KvConfig::parse("model.fc_width = 0\n"), "/"), Error,
                       kind_is(ErrorKind::InvalidWidth));
  auto bad = cfg;
  bad.alphas = {0.5, 0.5};
  CHECK_THROWS_MATCHES(bad.validate(), Error, kind_is(ErrorKind::ArityMismatch));
  bad.alphas = {0.2, 0.3, 0.6};
  CHECK_THROWS_MATCHES(bad.validate(), Error, kind_is(ErrorKind::ConstraintViolation));
  bad.alphas = {};
  CHECK_THROWS_MATCHES(bad.validate(), Error, kind_is(ErrorKind::EmptyConfig));
  bad.alphas = {-0.2, 0.6, 0.6};
  CHECK_THROWS_MATCHES(bad.validate(), Error, kind_is(ErrorKind::NegativeCoefficient));
  CHECK_THROWS_MATCHES(cfg.check_paths(), Error, kind_is(ErrorKind::MissingRoot));
}

TEST_CASE("checkpoint round trip", "[checkpoint]") {
  testing::TempDir dir("ckpt");
  RunConfig cfg;
  cfg.vision.width_multiplier = 0.25;
  cfg.vision.input_side = 32;
  cfg.text.embedding_dim = 4;
  cfg.text.filters_per_window = 2;
  cfg.text.max_tokens = 12;
  cfg.fc_width = 512;
  cfg.seed = 3;
  auto model = build_model<float>(cfg, 3, nullptr);
  Rng rng(71);
  Batch<float> batch;
  batch.images = Tensor<float>({2, 3, 32, 32});
  batch.tokens = Tensor<float>({2, 12, 4});
  for (auto& v : batch.images.values()) v = static_cast<float>(draw_uniform(rng, -1, 1));
  for (auto& v : batch.tokens.values()) v = static_cast<float>(draw_uniform(rng, -1, 1));
  const auto expected = model->forward(batch, nn::Mode::Eval);

  const auto path = dir.path() / "sub" / "model.ckpt";
  save_checkpoint<float>(path, cfg, kThree, *model, {{"note", "x"}});
  const auto loaded = load_checkpoint<float>(path);
  CHECK(loaded.info.class_names == kThree);
  CHECK(loaded.info.config_hash == cfg.hash());
  CHECK(loaded.info.metadata.at("extra").at("note") == "x");
  CHECK(loaded.model->forward(batch, nn::Mode::Eval) == expected);

  auto archive = nn::read_archive(path);
  archive.metadata["config_hash"] = std::string(64, '0');
  nn::write_archive(dir.path() / "tampered.ckpt", archive);
  CHECK_THROWS_MATCHES(load_checkpoint<float>(dir.path() / "tampered.ckpt"), Error,
                       kind_is(ErrorKind::CheckpointMismatch));
  archive = nn::read_archive(path);
  archive.metadata["base_hash"] = "deadbeef";
  nn::write_archive(dir.path() / "base.ckpt", archive);
  CHECK_THROWS_MATCHES(load_checkpoint<float>(dir.path() / "base.ckpt"), Error, kind_is(ErrorKind::CheckpointMismatch));
  archive.metadata["format"] = "other";
  nn::write_archive(dir.path() / "other.ckpt", archive);
  CHECK_THROWS_MATCHES(load_checkpoint<float>(dir.path() / "other.ckpt"), Error, kind_is(ErrorKind::CheckpointMismatch));
  CHECK_THROWS_MATCHES(load_checkpoint<float>(dir.path() / "none.ckpt"), Error, kind_is(ErrorKind::IoError));
}
