// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: one PASS/FAIL/SKIP line per criterion, exit status 1 if
// any criterion fails.
//
//   acceptance [N ...]      run only the listed criteria
//
// Criteria 10 and 11 need the Tobacco3482 images, the matching OCR text, a
// pre-trained MobileNetV2 archive and word embeddings. Point
// SIDETUNE_TOBACCO_CONFIG at a run config (see configs/tobacco3482.cfg) to
// enable them.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "sidetune/cli/commands.hpp"
#include "sidetune/data/synthetic.hpp"
#include "sidetune/fusion/combine.hpp"
#include "sidetune/fusion/fused_encoder.hpp"
#include "sidetune/train/trainer.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_models.hpp"

using namespace sidetune;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome failed(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::Skip, std::move(d)}; }
Outcome check(bool ok, std::string d) { return {ok ? Status::Pass : Status::Fail, std::move(d)}; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

Tensor<double> random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.values()) v = draw_uniform(rng, -scale, scale);
  return t;
}

/// Random valid coefficient list of the given length.
std::vector<double> random_alphas(std::size_t n, Rng& rng) {
  std::vector<double> a(n);
  for (auto& v : a) v = draw_unit(rng) + 1e-3;
  const double s = std::accumulate(a.begin(), a.end(), 0.0);
  for (auto& v : a) v /= s;
  a.back() = 1.0 - std::accumulate(a.begin(), a.end() - 1, 0.0);
  return a;
}

// ---------------------------------------------------------------- criterion 1
Outcome fusion_algebra() {
  Rng rng(1001);
  std::size_t checks = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t sides = 1 + draw_below(rng, 3);
    const Shape shape{1 + draw_below(rng, 8), 1 + draw_below(rng, 64)};
    std::vector<Tensor<double>> enc;
    for (std::size_t i = 0; i <= sides; ++i) enc.push_back(random_tensor(shape, rng, std::pow(10.0, draw_uniform(rng, -3, 3))));
    for (std::size_t k = 0; k <= sides; ++k) {
      std::vector<double> a(sides + 1, 0.0);
      a[k] = 1.0;
      if (!(combine(enc, validate_alphas(a)) == enc[k]))
        return failed("trial " + std::to_string(trial) + ": one-hot alpha on input " + std::to_string(k) +
                      " is not bit-identical");
      ++checks;
    }
  }
  // Whole model: a one-hot alpha reduces the scores to the head applied to that path alone.
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> a(3, 0.0);
      a[k] = 1.0;
      auto model = testing::tiny_fused(a, trial % 2 ? std::optional<std::size_t>(512) : std::nullopt, rng);
      Batch<double> batch;
      batch.images = random_tensor({4, 3, 4, 4}, rng);
      batch.tokens = random_tensor({4, 7, 4}, rng);
      const auto scores = model->forward(batch, nn::Mode::Eval);
      const auto single = k == 0 ? model->encode_base(batch.images) : model->encode_side(k - 1, batch, nn::Mode::Eval);
      if (!(scores == model->head().forward(single, nn::Mode::Eval)))
        return failed("fused model with one-hot alpha on path " + std::to_string(k) + " differs from that path");
      ++checks;
    }
  }
  return pass(std::to_string(checks) + " one-hot checks, exact equality");
}

// ---------------------------------------------------------------- criterion 2
Outcome gradient_oracle() {
  Rng rng(2002);
  double worst = 0.0;
  std::size_t entries = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t sides = 1 + draw_below(rng, 3);
    const Shape shape{1 + draw_below(rng, 4), 1 + draw_below(rng, 16)};
    std::vector<Tensor<double>> enc;
    for (std::size_t i = 0; i <= sides; ++i) enc.push_back(random_tensor(shape, rng));
    const auto alpha = validate_alphas(random_alphas(sides + 1, rng));
    const auto weights = random_tensor(shape, rng);
    // L = sum(W * tanh(R)); dL/dR = W * (1 - tanh(R)^2)
    auto loss = [&](const std::vector<Tensor<double>>& e) {
      const auto r = combine(e, alpha);
      double s = 0;
      for (std::size_t j = 0; j < r.size(); ++j) s += weights[j] * std::tanh(r[j]);
      return s;
    };
    const auto r = combine(enc, alpha);
    Tensor<double> upstream(shape);
    for (std::size_t j = 0; j < r.size(); ++j) upstream[j] = weights[j] * (1.0 - std::tanh(r[j]) * std::tanh(r[j]));
    const auto grads = combine_backward(upstream, alpha);
    for (std::size_t i = 0; i <= sides; ++i)
      for (std::size_t j = 0; j < enc[i].size(); ++j) {
        const double h = 1e-6, saved = enc[i][j];
        enc[i][j] = saved + h;
        const double up = loss(enc);
        enc[i][j] = saved - h;
        const double down = loss(enc);
        enc[i][j] = saved;
        const double fd = (up - down) / (2 * h), an = grads[i][j];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        worst = std::max(worst, std::abs(fd - an) / denom);
        ++entries;
      }
  }
  return check(worst < 1e-4, std::to_string(entries) + " entries over 100 instances, max relative error " + fmt(worst));
}

/// Synthetic corpus plus its run config, loaded the way the CLI does it.
struct SyntheticRun {
  testing::TempDir dir;
  SyntheticCorpusSpec spec;
  RunConfig cfg;
  PreparedData data;

  SyntheticRun(const std::string& tag, std::size_t classes, std::size_t per_class, std::size_t epochs)
      : dir(tag), spec(make_spec(classes, per_class)), cfg(make_config(dir.path(), spec, epochs)), data(prepare_data(cfg)) {
    resolve_channel_stats(cfg, data.split.train, 1);
  }

  static SyntheticCorpusSpec make_spec(std::size_t classes, std::size_t per_class) {
    SyntheticCorpusSpec s;
    s.classes = classes;
    s.per_class = per_class;
    return s;
  }

  static RunConfig make_config(const fs::path& root, const SyntheticCorpusSpec& spec, std::size_t epochs) {
    const auto corpus = write_synthetic_corpus(root / "corpus", spec);
    auto cfg = run_config_from(KvConfig::parse(synthetic_run_config(corpus, spec, root / "run")), root);
    cfg.train.max_epochs = epochs;
    return cfg;
  }
};

// ---------------------------------------------------------------- criterion 3
Outcome frozen_base() {
  SyntheticRun run("accept-frozen", 4, 16, 3);
  run.cfg.split_sizes = {48, 8, 8};
  run.cfg.vision.width_multiplier = 1.0;
  run.cfg.vision.input_side = 64;
  run.data = prepare_data(run.cfg);
  resolve_channel_stats(run.cfg, run.data.split.train, 1);
  if (run.data.corpus.samples.size() != 64) return failed("corpus has " + std::to_string(run.data.corpus.samples.size()) + " samples");

  auto model = build_model<float>(run.cfg, run.data.split.class_names.size(), nullptr);
  const auto before = nn::parameter_hash(model->frozen_parameters());
  nn::Archive side_before;
  nn::store_parameters(model->trainable_parameters(), side_before);
  const auto spec = input_spec(run.cfg);
  CorpusSource<float> train_src(run.data.split.train, spec, run.data.table.get());
  CorpusSource<float> val_src(run.data.split.val, spec, run.data.table.get());
  const auto result = train(*model, train_src, &val_src, run.cfg.train_config(), run.data.split.class_names);
  const auto after = nn::parameter_hash(model->frozen_parameters());

  // the checkpoint round trip must reproduce the same base bytes
  const auto ckpt = run.dir.path() / "frozen.ckpt";
  save_checkpoint(ckpt, run.cfg, run.data.split.class_names, *model);
  const auto reloaded = load_checkpoint<float>(ckpt);
  const auto from_disk = nn::parameter_hash(reloaded.model->frozen_parameters());

  bool side_moved = false;
  for (const auto& np : model->trainable_parameters())
    if (!(tensor_cast<float>(side_before.tensors.at(np.name)) == np.param->value)) side_moved = true;
  return check(before == after && after == from_disk && result.base_unchanged() && side_moved,
               "64 samples, " + std::to_string(result.history.size()) + " epochs, full-width MobileNetV2 base; sha256 " +
                   before.substr(0, 16) + (before == after ? " == " : " != ") + after.substr(0, 16) +
                   (side_moved ? ", side weights updated" : ", side weights did NOT move"));
}

// ---------------------------------------------------------------- criterion 4
Outcome text_param_count() {
  TextEncoderConfig cfg;
  cfg.num_classes = 10;
  Rng rng(4004);
  TextClassifier<float> model(cfg, rng);
  std::size_t n = 0;
  for (const auto& np : model.trainable_parameters()) n += np.param->value.size();
  return check(n == 1860106, std::to_string(n) + " trainable parameters");
}

// ---------------------------------------------------------------- criterion 5
Outcome shapes() {
  Rng rng(5005);
  TextCnn<float> text(TextEncoderConfig{});
  text.reset_parameters(rng);
  Tensor<float> tokens({2, 500, 300});
  for (auto& v : tokens.values()) v = static_cast<float>(draw_uniform(rng, -1, 1));
  std::vector<std::size_t> lengths;
  const auto enc = text.forward_traced(tokens, nn::Mode::Eval, &lengths);
  const bool text_ok = lengths == std::vector<std::size_t>{498, 497, 496} && enc.shape() == Shape{2, 1536};

  bool adapt_ok = true;
  for (std::size_t out : {1280u, 2048u}) {
    AdaptationLayer<float> adapt(1536, out);
    adapt.reset_parameters(rng);
    adapt_ok = adapt_ok && adapt.forward(enc, nn::Mode::Eval).shape() == Shape{2, out};
  }

  PageImage page{300, 200, std::vector<float>(300 * 200), {}};
  for (auto& v : page.pixels) v = static_cast<float>(draw_unit(rng));
  const auto replicated = resize_and_replicate<float>(page, 384);
  const std::size_t plane = 384 * 384;
  bool equal = replicated.shape() == Shape{3, 384, 384};
  for (std::size_t i = 0; equal && i < plane; ++i)
    equal = replicated[i] == replicated[plane + i] && replicated[i] == replicated[2 * plane + i];
  const auto standardized = preprocess<float>(page, VisionConfig{});
  const bool pre_ok = equal && standardized.shape() == Shape{3, 384, 384};

  std::ostringstream d;
  d << "conv lengths " << (lengths.size() == 3 ? std::to_string(lengths[0]) + "/" + std::to_string(lengths[1]) + "/" +
                                                     std::to_string(lengths[2])
                                               : std::string("?"))
    << ", text " << shape_string(enc.shape()) << ", adapt 1536->{1280,2048} " << (adapt_ok ? "ok" : "wrong")
    << ", page " << shape_string(standardized.shape()) << (equal ? " with equal channels" : " with unequal channels");
  return check(text_ok && adapt_ok && pre_ok, d.str());
}

// ---------------------------------------------------------------- criterion 6
Outcome schedule() {
  TrainConfig t;
  t.max_epochs = 100;
  t.base_lr = 0.1;
  const double at0 = lr_at(0, t), at_max = lr_at(100, t), at25 = lr_at(25, t);
  bool monotone = true;
  double prev = -1;
  for (int e = 0; e <= 100; ++e) {
    const double lr = lr_at(e, t);
    monotone = monotone && lr >= prev;
    prev = lr;
  }
  const bool ok = at0 == 0.0 && std::abs(at_max - 0.1) <= 1e-12 && std::abs(at25 - 0.05) <= 1e-12 && monotone;
  return check(ok, "lr(0)=" + fmt(at0, 17) + " lr(100)=" + fmt(at_max, 17) + " lr(25)=" + fmt(at25, 17) +
                       (monotone ? ", nondecreasing" : ", NOT monotone"));
}

// ---------------------------------------------------------------- criterion 7
Outcome overfit() {
  SyntheticRun run("accept-overfit", 4, 8, 20);
  run.cfg.split_sizes = {32, 0, 0};
  run.data = prepare_data(run.cfg);
  resolve_channel_stats(run.cfg, run.data.split.train, 1);
  auto model = build_model<float>(run.cfg, run.data.split.class_names.size(), nullptr);
  const auto spec = input_spec(run.cfg);
  CorpusSource<float> src(run.data.split.train, spec, run.data.table.get());
  std::optional<std::size_t> reached;
  double last = 0;
  TrainCallbacks cb;
  cb.on_epoch = [&](const EpochRecord& r) {
    last = evaluate(*model, src, run.data.split.class_names, run.cfg.train.batch_size).report.overall_accuracy;
    if (last == 1.0 && !reached) reached = r.epoch + 1;
  };
  train<float>(*model, src, nullptr, run.cfg.train_config(), run.data.split.class_names, cb);
  return check(reached.has_value(), "32 samples, MobileNetV2 width " + fmt(run.cfg.vision.width_multiplier) + ", base lr " +
                                        fmt(run.cfg.train.base_lr) +
                                        (reached ? ", 100% train accuracy at epoch " + std::to_string(*reached)
                                                 : ", final train accuracy " + fmt(100 * last) + "%"));
}

// ---------------------------------------------------------------- criterion 8
Outcome eval_consistency() {
  Rng rng(8008);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + draw_below(rng, 15), n = 1 + draw_below(rng, 500);
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(draw_below(rng, c));
      p[i] = draw_unit(rng) < draw_unit(rng) ? y[i] : static_cast<int>(draw_below(rng, c));
    }
    std::vector<std::string> names(c, "x");
    const auto r = EvalReport::from_predictions(y, p, names);
    std::size_t trace = 0;
    for (std::size_t k = 0; k < c; ++k) trace += r.confusion[k][k];
    double weighted = 0;
    for (std::size_t k = 0; k < c; ++k) {
      const auto row = std::accumulate(r.confusion[k].begin(), r.confusion[k].end(), std::size_t{0});
      if (row) weighted += static_cast<double>(row) * *r.per_class_accuracy[k];
    }
    weighted /= static_cast<double>(n);
    const double oa = static_cast<double>(trace) / static_cast<double>(n);
    worst = std::max({worst, std::abs(r.overall_accuracy - oa), std::abs(r.overall_accuracy - weighted)});
  }
  return check(worst <= 1e-12, "1000 randomized sets, max deviation " + fmt(worst));
}

// ---------------------------------------------------------------- criterion 9
Outcome split_protocol() {
  std::vector<DocumentSample> samples;
  for (std::size_t i = 0; i < 3482; ++i) samples.push_back({"doc" + std::to_string(i), {}, static_cast<int>(i % 10)});
  const auto a = split_random(samples, 42), b = split_random(samples, 42);
  auto ids = [](const std::vector<DocumentSample>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(s.image_path.string());
    return out;
  };
  std::set<std::string> all;
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (const auto& s : *part) all.insert(s.image_path.string());
  const bool sizes = a.train.size() == 800 && a.val.size() == 200 && a.test.size() == 2482;
  const bool disjoint = all.size() == 3482;
  const bool deterministic = ids(a.train) == ids(b.train) && ids(a.val) == ids(b.val) && ids(a.test) == ids(b.test);
  return check(sizes && disjoint && deterministic,
               std::to_string(a.train.size()) + "/" + std::to_string(a.val.size()) + "/" + std::to_string(a.test.size()) +
                   (disjoint ? ", disjoint" : ", OVERLAPPING") + (deterministic ? ", deterministic" : ", NOT deterministic"));
}

// ------------------------------------------------------------ criteria 10, 11
struct Assets {
  std::optional<RunConfig> cfg;
  std::string reason;
};

Assets tobacco_assets() {
  const char* path = std::getenv("SIDETUNE_TOBACCO_CONFIG");
  if (!path || !*path) return {std::nullopt, "SIDETUNE_TOBACCO_CONFIG not set"};
  try {
    auto cfg = load_run_config(path);
    cfg.check_paths();
    if (cfg.pretrained.empty()) return {std::nullopt, "model.pretrained is not set in " + std::string(path)};
    if (cfg.split_sizes[0] + cfg.split_sizes[1] + cfg.split_sizes[2] != 3482)
      return {std::nullopt, "config does not describe the 3482-document corpus"};
    return {cfg, {}};
  } catch (const Error& e) {
    return {std::nullopt, std::string(path) + ": " + std::string(e.name()) + ": " + e.what()};
  }
}

/// Trains one variant under <out>/acceptance/<name> and returns test OA.
double tobacco_variant(RunConfig cfg, const std::string& name) {
  cfg.out = cfg.out / "acceptance" / name;
  cfg.validate();
  auto data = prepare_data(cfg);
  resolve_channel_stats(cfg, data.split.train, cfg.threads);
  write_manifest(cfg.out, cfg, "acceptance", split_facts(data));
  const auto pretrained = cfg.kind == ModelKind::Fused ? load_pretrained(cfg) : nullptr;
  Console con{std::cout, std::cerr};
  const auto outcome = train_run(cfg, data, pretrained.get(), con, name + ": ");
  auto loaded = load_checkpoint<float>(outcome.checkpoint);
  CorpusSource<float> test(data.split.test, input_spec(cfg), data.table.get());
  const auto ev = evaluate(*loaded.model, test, data.split.class_names, cfg.train.batch_size, cfg.threads);
  write_eval_report(cfg.out / "eval-test", ev.report, name, nlohmann::json::object());
  return ev.report.overall_accuracy;
}

RunConfig multimodal(RunConfig cfg) {
  cfg.kind = ModelKind::Fused;
  cfg.vision.backbone = BackboneKind::MobileNetV2;
  cfg.sides = {Modality::Image, Modality::Text};
  cfg.alphas = {0.2, 0.3, 0.5};
  cfg.fc_width = 1024;
  return cfg;
}

std::optional<double> multimodal_oa;

Outcome reproduction() {
  const auto assets = tobacco_assets();
  if (!assets.cfg) return skip("assets absent (" + assets.reason + ")");
  multimodal_oa = tobacco_variant(multimodal(*assets.cfg), "multimodal");
  return check(*multimodal_oa >= 0.885, "multimodal test OA " + percent(*multimodal_oa) + " (threshold 88.50%)");
}

Outcome ordering() {
  const auto assets = tobacco_assets();
  if (!assets.cfg) return skip("assets absent (" + assets.reason + ")");
  const double mm = multimodal_oa ? *multimodal_oa : tobacco_variant(multimodal(*assets.cfg), "multimodal");
  auto image_side = multimodal(*assets.cfg);
  image_side.sides = {Modality::Image};
  image_side.alphas = {0.5, 0.5};
  const double side = tobacco_variant(image_side, "image-side-tuning");
  auto fine = image_side;
  fine.alphas = {0.0, 1.0};
  const double ft = tobacco_variant(fine, "image-fine-tuning");
  auto text = *assets.cfg;
  text.kind = ModelKind::Text;
  const double tx = tobacco_variant(text, "text-only");
  return check(mm > side && side > ft && ft > tx, "OA multimodal " + percent(mm) + " > image side-tuning " +
                                                      percent(side) + " > image fine-tuning " + percent(ft) +
                                                      " > text " + percent(tx));
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "fusion algebra: one-hot alphas are exact", fusion_algebra},
      {2, "gradient oracle for combine", gradient_oracle},
      {3, "frozen base survives training", frozen_base},
      {4, "text classifier parameter count", text_param_count},
      {5, "text, adaptation and page shapes", shapes},
      {6, "learning-rate schedule", schedule},
      {7, "overfit sanity", overfit},
      {8, "evaluation report consistency", eval_consistency},
      {9, "split protocol", split_protocol},
      {10, "Tobacco3482 reproduction", reproduction},
      {11, "Tobacco3482 model ordering", ordering},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const Error& e) {
      o = failed(std::string(e.name()) + ": " + e.what());
    } catch (const std::exception& e) {
      o = failed(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Skip ? "SKIP" : "FAIL";
    failures += o.status == Status::Fail;
    std::cout << "criterion " << (c.id < 10 ? " " : "") << c.id << " " << tag << "  " << c.title << ": " << o.detail
              << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  return failures ? 1 : 0;
}
