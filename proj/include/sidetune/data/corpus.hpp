// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sidetune/core/error.hpp"

namespace sidetune {

/// A page scan paired with its OCR text file. `text_path` is empty when no
/// stem-matched text exists; such samples are kept with empty text.
struct DocumentSample {
  std::filesystem::path image_path;
  std::filesystem::path text_path;
  int label = 0;

  bool has_text() const { return !text_path.empty(); }

  std::string load_text() const {
    if (text_path.empty()) return {};
    std::ifstream in(text_path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot read text file " + text_path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  friend bool operator==(const DocumentSample&, const DocumentSample&) = default;
};

enum class CorpusLayout { FolderPerClass, IndexFile };

inline CorpusLayout parse_layout(const std::string& name) {
  if (name == "folder" || name == "folder-per-class") return CorpusLayout::FolderPerClass;
  if (name == "index" || name == "index-file") return CorpusLayout::IndexFile;
  fail(ErrorKind::ConfigError, "unknown corpus layout '" + name + "' (expected folder or index)");
}

inline std::string layout_name(CorpusLayout layout) {
  return layout == CorpusLayout::FolderPerClass ? "folder" : "index";
}

struct Corpus {
  std::vector<DocumentSample> samples;
  std::vector<std::string> class_names;
  /// Samples without a matching text file.
  std::size_t missing_text = 0;
  /// Index-file corpora ship fixed train/val/test lists; samples are stored
  /// in that order with these cardinalities.
  std::optional<std::array<std::size_t, 3>> fixed_split;
};

inline bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".tif" || ext == ".tiff" || ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

namespace corpus_detail {

inline void require_root(const std::filesystem::path& root, const char* what) {
  if (root.empty() || !std::filesystem::is_directory(root))
    fail(ErrorKind::MissingRoot, std::string(what) + " not found: " + root.string());
}

inline std::filesystem::path text_for(const std::filesystem::path& text_root, const std::filesystem::path& relative) {
  auto p = text_root / relative;
  p.replace_extension(".txt");
  return std::filesystem::is_regular_file(p) ? p : std::filesystem::path{};
}

inline Corpus load_folder_per_class(const std::filesystem::path& image_root, const std::filesystem::path& text_root) {
  namespace fs = std::filesystem;
  Corpus c;
  bool loose_images = false;
  for (const auto& entry : fs::directory_iterator(image_root)) {
    if (entry.is_directory()) c.class_names.push_back(entry.path().filename().string());
    else if (is_image_file(entry.path())) loose_images = true;
  }
  std::sort(c.class_names.begin(), c.class_names.end());
  if (c.class_names.empty()) {
    if (loose_images)
      fail(ErrorKind::LayoutMismatch, "images found directly under " + image_root.string() +
                                          "; expected one subdirectory per class");
    fail(ErrorKind::EmptyCorpus, "no class directories under " + image_root.string());
  }
  bool any_text_dir = false;
  for (std::size_t label = 0; label < c.class_names.size(); ++label) {
    const auto& name = c.class_names[label];
    any_text_dir = any_text_dir || fs::is_directory(text_root / name);
    std::vector<fs::path> images;
    for (const auto& entry : fs::directory_iterator(image_root / name))
      if (entry.is_regular_file() && is_image_file(entry.path())) images.push_back(entry.path());
    std::sort(images.begin(), images.end());
    for (const auto& img : images) {
      DocumentSample s{img, text_for(text_root, fs::path(name) / img.filename()), static_cast<int>(label)};
      c.missing_text += !s.has_text();
      c.samples.push_back(std::move(s));
    }
  }
  if (c.samples.empty()) fail(ErrorKind::EmptyCorpus, "no images under " + image_root.string());
  if (!any_text_dir)
    fail(ErrorKind::LayoutMismatch, "text root " + text_root.string() + " has none of the class directories");
  return c;
}

/// RVL-CDIP style: <root>/labels/{train,val,test}.txt with lines
/// "relative/path.tif label", paths relative to <root>/images (or <root>).
inline Corpus load_index_files(const std::filesystem::path& image_root, const std::filesystem::path& text_root) {
  namespace fs = std::filesystem;
  const fs::path labels = image_root / "labels";
  const fs::path images = fs::is_directory(image_root / "images") ? image_root / "images" : image_root;
  if (!fs::is_directory(labels)) fail(ErrorKind::LayoutMismatch, "index layout expects " + labels.string());
  Corpus c;
  std::array<std::size_t, 3> sizes{};
  int max_label = -1;
  const std::array<const char*, 3> splits{"train.txt", "val.txt", "test.txt"};
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const fs::path index = labels / splits[s];
    if (!fs::is_regular_file(index)) fail(ErrorKind::LayoutMismatch, "missing index file " + index.string());
    std::ifstream in(index);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      std::istringstream fields(line);
      std::string rel;
      long label = -1;
      std::string extra;
      if (!(fields >> rel >> label) || (fields >> extra) || label < 0)
        fail(ErrorKind::LayoutMismatch, index.string() + ":" + std::to_string(line_no) + ": expected 'path label'");
      const fs::path img = images / rel;
      if (!fs::is_regular_file(img)) fail(ErrorKind::LayoutMismatch, "listed image missing: " + img.string());
      DocumentSample sample{img, text_for(text_root, rel), static_cast<int>(label)};
      c.missing_text += !sample.has_text();
      c.samples.push_back(std::move(sample));
      max_label = std::max<int>(max_label, static_cast<int>(label));
      ++sizes[s];
    }
  }
  if (c.samples.empty()) fail(ErrorKind::EmptyCorpus, "index files under " + labels.string() + " list no samples");
  for (int i = 0; i <= max_label; ++i) c.class_names.push_back(std::to_string(i));
  c.fixed_split = sizes;
  return c;
}

}  // namespace corpus_detail

/// Scans a paired image/text corpus. Class labels follow the lexicographic
/// order of class directory names (folder layout) or the integer labels of
/// the index files.
inline Corpus load_corpus(const std::filesystem::path& image_root, const std::filesystem::path& text_root,
                          CorpusLayout layout) {
  corpus_detail::require_root(image_root, "image root");
  corpus_detail::require_root(text_root, "text root");
  return layout == CorpusLayout::FolderPerClass ? corpus_detail::load_folder_per_class(image_root, text_root)
                                                : corpus_detail::load_index_files(image_root, text_root);
}

/// Replaces numeric index-file class names with readable ones, one per line.
inline void apply_class_names(Corpus& corpus, const std::vector<std::string>& names) {
  if (names.size() < corpus.class_names.size())
    fail(ErrorKind::LayoutMismatch, "class name list has " + std::to_string(names.size()) + " entries for " +
                                        std::to_string(corpus.class_names.size()) + " labels");
  corpus.class_names = names;
}

}  // namespace sidetune
