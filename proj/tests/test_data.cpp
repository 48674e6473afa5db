// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include <sys/stat.h>

#include "sidetune/data/corpus.hpp"
#include "sidetune/data/ocr.hpp"
#include "sidetune/data/source.hpp"
#include "sidetune/data/split.hpp"
#include "sidetune/data/synthetic.hpp"
#include "sidetune/text/embedding.hpp"
#include "support/temp_dir.hpp"

using namespace sidetune;
namespace fs = std::filesystem;

namespace {

auto kind_is(ErrorKind k) {
  return Catch::Matchers::Predicate<Error>([k](const Error& e) { return e.kind() == k; }, "error kind");
}

void touch_page(const fs::path& p) {
  fs::create_directories(p.parent_path());
  save_page(PageImage{4, 4, std::vector<float>(16, 0.5f), {}}, p);
}

fs::path write_script(const fs::path& p, const std::string& body) {
  std::ofstream(p) << "#!/bin/sh\n" << body << "\n";
  ::chmod(p.c_str(), 0755);
  return p;
}

std::vector<DocumentSample> fake_samples(std::size_t n, std::size_t classes) {
  std::vector<DocumentSample> v;
  for (std::size_t i = 0; i < n; ++i)
    v.push_back({"img" + std::to_string(i) + ".png", {}, static_cast<int>(i % classes)});
  return v;
}

std::set<std::string> names(const std::vector<DocumentSample>& part) {
  std::set<std::string> s;
  for (const auto& d : part) s.insert(d.image_path.string());
  return s;
}

}  // namespace

TEST_CASE("folder layout scan", "[data]") {
  testing::TempDir dir("data");
  SyntheticCorpusSpec spec;
  spec.per_class = 4;
  const auto corpus = write_synthetic_corpus(dir.path(), spec);
  fs::remove(corpus.text_root / "Email" / "doc002.txt");
  std::ofstream(corpus.image_root / "Form" / "notes.md") << "ignored";

  const auto c = load_corpus(corpus.image_root, corpus.text_root, CorpusLayout::FolderPerClass);
  CHECK(c.class_names == std::vector<std::string>{"ADVE", "Email", "Form"});
  REQUIRE(c.samples.size() == 12);
  CHECK(c.missing_text == 1);
  CHECK_FALSE(c.fixed_split);
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    CHECK(c.samples[i].label == static_cast<int>(i / 4));
    CHECK(c.samples[i].image_path.parent_path().filename() == c.class_names[i / 4]);
  }
  CHECK_FALSE(c.samples[6].has_text());
  CHECK(c.samples[6].load_text().empty());
  CHECK(c.samples[0].load_text().find("topic0") != std::string::npos);
}

TEST_CASE("folder layout errors", "[data]") {
  testing::TempDir dir("data");
  CHECK_THROWS_MATCHES(load_corpus(dir.path() / "nope", dir.path(), CorpusLayout::FolderPerClass), Error,
                       kind_is(ErrorKind::MissingRoot));
  fs::create_directories(dir.path() / "img");
  fs::create_directories(dir.path() / "txt");
  CHECK_THROWS_MATCHES(load_corpus(dir.path() / "img", dir.path() / "txt", CorpusLayout::FolderPerClass), Error,
                       kind_is(ErrorKind::EmptyCorpus));
  touch_page(dir.path() / "img" / "loose.png");
  CHECK_THROWS_MATCHES(load_corpus(dir.path() / "img", dir.path() / "txt", CorpusLayout::FolderPerClass), Error,
                       kind_is(ErrorKind::LayoutMismatch));
  fs::create_directories(dir.path() / "img" / "a");
  CHECK_THROWS_MATCHES(load_corpus(dir.path() / "img", dir.path() / "txt", CorpusLayout::FolderPerClass), Error,
                       kind_is(ErrorKind::EmptyCorpus));
  touch_page(dir.path() / "img" / "a" / "x.png");
  CHECK_THROWS_MATCHES(load_corpus(dir.path() / "img", dir.path() / "txt", CorpusLayout::FolderPerClass), Error,
                       kind_is(ErrorKind::LayoutMismatch));
  CHECK_THROWS_MATCHES(parse_layout("csv"), Error, kind_is(ErrorKind::ConfigError));
}

TEST_CASE("index layout scan", "[data]") {
  testing::TempDir dir("data");
  const auto root = dir.path() / "rvl";
  const auto text = dir.path() / "ocr";
  fs::create_directories(root / "labels");
  touch_page(root / "images" / "a" / "1.tif");
  touch_page(root / "images" / "a" / "2.tif");
  touch_page(root / "images" / "b" / "3.tif");
  fs::create_directories(text / "a");
  std::ofstream(text / "a" / "1.txt") << "hello";
  std::ofstream(root / "labels" / "train.txt") << "a/1.tif 4\r\na/2.tif 0\n\n";
  std::ofstream(root / "labels" / "val.txt") << "b/3.tif 2\n";
  std::ofstream(root / "labels" / "test.txt") << "a/1.tif 4\n";

  auto c = load_corpus(root, text, CorpusLayout::IndexFile);
  REQUIRE(c.samples.size() == 4);
  CHECK(c.class_names.size() == 5);
  CHECK(c.fixed_split == std::array<std::size_t, 3>{2, 1, 1});
  CHECK(c.missing_text == 2);
  CHECK(c.samples[0].label == 4);
  CHECK(c.samples[0].load_text() == "hello");
  const auto split = split_fixed(c);
  CHECK(split.train.size() == 2);
  CHECK(split.val.at(0).label == 2);
  CHECK(split.test.at(0).image_path == c.samples[0].image_path);

  CHECK_THROWS_MATCHES(apply_class_names(c, {"x", "y"}), Error, kind_is(ErrorKind::LayoutMismatch));
  apply_class_names(c, {"p", "q", "r", "s", "t"});
  CHECK(c.class_names.at(4) == "t");

  std::ofstream(root / "labels" / "val.txt") << "b/3.tif two\n";
  CHECK_THROWS_MATCHES(load_corpus(root, text, CorpusLayout::IndexFile), Error, kind_is(ErrorKind::LayoutMismatch));
  std::ofstream(root / "labels" / "val.txt") << "b/9.tif 1\n";
  CHECK_THROWS_MATCHES(load_corpus(root, text, CorpusLayout::IndexFile), Error, kind_is(ErrorKind::LayoutMismatch));
  fs::remove(root / "labels" / "test.txt");
  CHECK_THROWS_MATCHES(load_corpus(root, text, CorpusLayout::IndexFile), Error, kind_is(ErrorKind::LayoutMismatch));
}

TEST_CASE("random split properties", "[data]") {
  const auto samples = fake_samples(3482, 10);
  const auto a = split_random(samples, 42);
  const auto b = split_random(samples, 42);
  CHECK(a.train.size() == 800);
  CHECK(a.val.size() == 200);
  CHECK(a.test.size() == 2482);
  CHECK(names(a.train) == names(b.train));
  CHECK(names(a.test) == names(b.test));
  for (std::size_t i = 0; i < a.train.size(); ++i) REQUIRE(a.train[i].image_path == b.train[i].image_path);

  auto tr = names(a.train), va = names(a.val), te = names(a.test);
  std::set<std::string> all;
  all.insert(tr.begin(), tr.end());
  all.insert(va.begin(), va.end());
  all.insert(te.begin(), te.end());
  CHECK(all.size() == 3482);

  const auto c = split_random(samples, 43);
  CHECK(names(c.train) != names(a.train));

  CHECK_THROWS_MATCHES(split_random(fake_samples(100, 10), 1), Error, kind_is(ErrorKind::SizeMismatch));
  CHECK_THROWS_MATCHES(a.part("holdout"), Error, kind_is(ErrorKind::ConfigError));
  CHECK(&a.part("val") == &a.val);
}

TEST_CASE("stratified split keeps class proportions", "[data]") {
  auto samples = fake_samples(300, 3);
  for (std::size_t i = 0; i < 60; ++i) samples[i * 5].label = 0;
  std::vector<std::size_t> counts(3);
  for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.label)];
  const auto split = split_random(samples, 5, {150, 60, 90}, true);
  CHECK(split.train.size() == 150);
  CHECK(split.val.size() == 60);
  CHECK(split.test.size() == 90);
  std::vector<std::size_t> train_counts(3);
  for (const auto& s : split.train) ++train_counts[static_cast<std::size_t>(s.label)];
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(std::abs(static_cast<double>(train_counts[c]) - 150.0 * static_cast<double>(counts[c]) / 300.0) <= 1.0);
  CHECK(names(split.train).size() + names(split.val).size() + names(split.test).size() == 300);
}

TEST_CASE("OCR subprocess handling", "[data][ocr]") {
  testing::TempDir dir("ocr");
  const auto page = dir.path() / "page.png";
  touch_page(page);
  OcrConfig cfg;
  cfg.engine = write_script(dir.path() / "ok.sh", "echo \"text of $(basename $1) $2 $3 $4 t=$OMP_THREAD_LIMIT\"").string();
  cfg.threads = 3;
  const auto r = run_ocr(page, cfg);
  CHECK(r.text == "text of page.png stdout -l eng t=3\n");
  CHECK(r.duration_ms >= 0.0);

  cfg.engine = write_script(dir.path() / "bad.sh", "echo 'warming up' >&2\necho 'Error: cannot read' >&2\nexit 1").string();
  CHECK_THROWS_MATCHES(run_ocr(page, cfg), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.kind() == ErrorKind::OcrFailure &&
                                std::string(e.what()).find("Error: cannot read") != std::string::npos;
                       }));

  cfg.engine = write_script(dir.path() / "slow.sh", "exec sleep 5").string();
  cfg.timeout_seconds = 0.3;
  const auto t0 = std::chrono::steady_clock::now();
  CHECK_THROWS_MATCHES(run_ocr(page, cfg), Error, kind_is(ErrorKind::Timeout));
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(3));

  cfg.engine = "sidetune-no-such-engine";
  CHECK_THROWS_MATCHES(run_ocr(page, cfg), Error, kind_is(ErrorKind::EngineMissing));
  cfg.engine = (dir.path() / "missing.sh").string();
  CHECK_THROWS_MATCHES(run_ocr(page, cfg), Error, kind_is(ErrorKind::EngineMissing));
  cfg.engine = "";
  CHECK_THROWS_MATCHES(run_ocr_batch({page}, cfg, 2), Error, kind_is(ErrorKind::EngineMissing));

  cfg.engine = (dir.path() / "ok.sh").string();
  cfg.timeout_seconds = 30;
  CHECK_THROWS_MATCHES(run_ocr(dir.path() / "absent.png", cfg), Error, kind_is(ErrorKind::IoError));

  std::vector<fs::path> pages;
  for (int i = 0; i < 6; ++i) {
    pages.push_back(dir.path() / ("p" + std::to_string(i) + ".png"));
    touch_page(pages.back());
  }
  const auto batch = run_ocr_batch(pages, cfg, 3);
  REQUIRE(batch.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(batch[i].text.rfind("text of p" + std::to_string(i) + ".png", 0) == 0);
}

TEST_CASE("corpus source and batches", "[data]") {
  testing::TempDir dir("source");
  SyntheticCorpusSpec spec;
  spec.per_class = 2;
  const auto corpus = write_synthetic_corpus(dir.path(), spec);
  const auto c = load_corpus(corpus.image_root, corpus.text_root, CorpusLayout::FolderPerClass);
  const auto table = load_embeddings(corpus.embeddings, spec.embedding_dim);

  InputSpec in;
  in.vision.input_side = 24;
  in.max_tokens = 12;
  CorpusSource<float> source(c.samples, in, &table);
  CHECK(source.size() == 6);
  const std::vector<std::size_t> idx{5, 0, 3};
  const auto both = make_batch<float>(source, idx, Modalities{true, true}, 2);
  CHECK(both.images.shape() == Shape{3, 3, 24, 24});
  CHECK(both.tokens.shape() == Shape{3, 12, spec.embedding_dim});
  CHECK(both.labels == std::vector<int>{2, 0, 1});

  const auto single = make_batch<float>(source, std::span<const std::size_t>(idx).subspan(1, 1), Modalities{true, true});
  for (std::size_t i = 0; i < single.images.size(); ++i) REQUIRE(single.images[i] == both.images[single.images.size() + i]);

  const auto text_only = make_batch<float>(source, idx, Modalities{false, true});
  CHECK(text_only.images.size() == 0);
  CHECK(text_only.tokens == both.tokens);

  CorpusSource<float> no_table(c.samples, in, nullptr);
  CHECK_THROWS_MATCHES(no_table.load(0, Modalities{false, true}), Error, kind_is(ErrorKind::ConfigError));
  CHECK_NOTHROW(no_table.load(0, Modalities{true, false}));
}
