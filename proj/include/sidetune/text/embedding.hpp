// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sidetune/core/mapped_file.hpp"
#include "sidetune/core/tensor.hpp"
#include "sidetune/text/tokenize.hpp"

namespace sidetune {

/// Frozen token -> vector lookup (k = 300 for the reference fastText vectors).
/// Storage is either owned buffers or a memory-mapped sidecar; the token
/// index holds views into that storage.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(EmbeddingTable&&) noexcept = default;
  EmbeddingTable& operator=(EmbeddingTable&&) noexcept = default;

  /// In-memory table. Every vector must have exactly `dim` finite entries.
  static EmbeddingTable from_entries(const std::vector<std::pair<std::string, std::vector<float>>>& entries,
                                     std::size_t dim, std::string source = "memory") {
    EmbeddingTable t;
    t.dim_ = dim;
    t.source_ = std::move(source);
    for (const auto& [token, vec] : entries) {
      if (vec.size() != dim)
        fail(ErrorKind::DimensionMismatch, "embedding for '" + token + "' has " + std::to_string(vec.size()) +
                                               " entries, expected " + std::to_string(dim));
      t.append_owned(token, vec);
    }
    t.finish_owned();
    return t;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return count_; }
  const std::string& source() const noexcept { return source_; }
  bool memory_mapped() const noexcept { return mapped_.data() != nullptr; }

  std::optional<std::span<const float>> find(std::string_view token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return std::span<const float>(matrix_ + static_cast<std::size_t>(it->second) * dim_, dim_);
  }

  friend EmbeddingTable load_embeddings(const std::filesystem::path&, std::size_t, bool);

 private:
  void append_owned(std::string_view token, std::span<const float> vec) {
    for (float v : vec)
      if (!std::isfinite(v)) fail(ErrorKind::IoError, "non-finite embedding value for '" + std::string(token) + "'");
    names_.insert(names_.end(), token.begin(), token.end());
    names_.push_back('\0');
    values_.insert(values_.end(), vec.begin(), vec.end());
    ++count_;
  }

  void finish_owned() {
    matrix_ = values_.data();
    build_index(names_.data(), names_.size());
  }

  void build_index(const char* names, std::size_t bytes) {
    index_.clear();
    index_.reserve(count_);
    std::size_t at = 0;
    for (std::uint32_t row = 0; row < count_; ++row) {
      const std::size_t len = std::strlen(names + at);
      if (at + len >= bytes) fail(ErrorKind::IoError, "corrupt embedding name block");
      index_.emplace(std::string_view(names + at, len), row);  // first occurrence wins
      at += len + 1;
    }
  }

  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::string source_;
  std::vector<char> names_;
  std::vector<float> values_;
  MappedFile mapped_;
  const float* matrix_ = nullptr;
  std::unordered_map<std::string_view, std::uint32_t> index_;
};

namespace detail {

inline constexpr char kSidecarMagic[8] = {'S', 'T', 'E', 'M', 'B', '0', '0', '1'};

struct SidecarHeader {
  char magic[8];
  std::uint64_t source_size;
  std::int64_t source_mtime;
  std::uint64_t dim;
  std::uint64_t count;
  std::uint64_t names_bytes;
};

inline std::int64_t mtime_ticks(const std::filesystem::path& p) {
  return static_cast<std::int64_t>(std::filesystem::last_write_time(p).time_since_epoch().count());
}

inline std::size_t align8(std::size_t n) { return (n + 7) & ~std::size_t{7}; }

}  // namespace detail

inline std::filesystem::path sidecar_path(const std::filesystem::path& text_path) {
  return std::filesystem::path(text_path.string() + ".stbin");
}

/// Loads a plain-text embedding file: one line per token, the token followed
/// by `dim` space-separated decimals (a leading "count dim" header line, as in
/// fastText .vec files, is skipped). With `use_sidecar`, a binary copy is
/// written next to the file on first load and memory-mapped on later loads
/// while the source size and modification time are unchanged. A sidecar path
/// may also be passed directly. `expected_dim` of 0 accepts the file's width.
inline EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t expected_dim = 300,
                                      bool use_sidecar = true) {
  namespace fs = std::filesystem;
  using detail::SidecarHeader;

  auto open_sidecar = [&](const fs::path& side, const std::optional<fs::path>& source) -> std::optional<EmbeddingTable> {
    MappedFile map(side);
    if (map.size() < sizeof(SidecarHeader)) return std::nullopt;
    SidecarHeader h{};
    std::memcpy(&h, map.data(), sizeof(h));
    if (std::memcmp(h.magic, detail::kSidecarMagic, 8) != 0) return std::nullopt;
    if (source && (h.source_size != fs::file_size(*source) || h.source_mtime != detail::mtime_ticks(*source)))
      return std::nullopt;
    const std::size_t matrix_at = detail::align8(sizeof(SidecarHeader) + h.names_bytes);
    if (map.size() < matrix_at + h.count * h.dim * sizeof(float)) return std::nullopt;
    if (expected_dim != 0 && h.dim != expected_dim)
      fail(ErrorKind::DimensionMismatch, "embedding sidecar has dimension " + std::to_string(h.dim) + ", expected " +
                                             std::to_string(expected_dim));
    EmbeddingTable t;
    t.dim_ = h.dim;
    t.count_ = h.count;
    t.source_ = (source ? *source : side).string();
    t.matrix_ = reinterpret_cast<const float*>(map.data() + matrix_at);
    t.build_index(reinterpret_cast<const char*>(map.data() + sizeof(SidecarHeader)), h.names_bytes);
    t.mapped_ = std::move(map);
    return t;
  };

  if (!fs::exists(path)) fail(ErrorKind::MissingRoot, "embedding file not found: " + path.string());

  {
    std::ifstream probe(path, std::ios::binary);
    char magic[8] = {};
    probe.read(magic, 8);
    if (probe && std::memcmp(magic, detail::kSidecarMagic, 8) == 0) {
      if (auto t = open_sidecar(path, std::nullopt)) return std::move(*t);
      fail(ErrorKind::IoError, "corrupt embedding sidecar " + path.string());
    }
  }

  const auto side = sidecar_path(path);
  if (use_sidecar && fs::exists(side))
    if (auto t = open_sidecar(side, path)) return std::move(*t);

  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
  EmbeddingTable t;
  t.source_ = path.string();
  t.dim_ = expected_dim;
  std::string line;
  std::vector<float> vec;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t space = line.find(' ');
    if (space == std::string::npos || space == 0)
      fail(ErrorKind::IoError, path.string() + ":" + std::to_string(line_no) + ": malformed embedding line");
    const std::string_view token(line.data(), space);
    vec.clear();
    const char* p = line.data() + space;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      float v = 0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc())
        fail(ErrorKind::IoError, path.string() + ":" + std::to_string(line_no) + ": bad number");
      vec.push_back(v);
      p = next;
    }
    if (line_no == 1 && vec.size() == 1 && token.find_first_not_of("0123456789") == std::string_view::npos)
      continue;  // "count dim" header
    if (t.dim_ == 0) t.dim_ = vec.size();
    if (vec.size() != t.dim_)
      fail(ErrorKind::DimensionMismatch, path.string() + ":" + std::to_string(line_no) + ": " +
                                             std::to_string(vec.size()) + " values, expected " +
                                             std::to_string(t.dim_));
    t.append_owned(token, vec);
  }
  t.finish_owned();

  if (use_sidecar) {
    SidecarHeader h{};
    std::memcpy(h.magic, detail::kSidecarMagic, 8);
    h.source_size = fs::file_size(path);
    h.source_mtime = detail::mtime_ticks(path);
    h.dim = t.dim_;
    h.count = t.count_;
    h.names_bytes = t.names_.size();
    const auto tmp = fs::path(side.string() + ".tmp");
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (os) {
      os.write(reinterpret_cast<const char*>(&h), sizeof(h));
      os.write(t.names_.data(), static_cast<std::streamsize>(t.names_.size()));
      const std::size_t pad = detail::align8(sizeof(h) + t.names_.size()) - (sizeof(h) + t.names_.size());
      const char zeros[8] = {};
      os.write(zeros, static_cast<std::streamsize>(pad));
      os.write(reinterpret_cast<const char*>(t.values_.data()),
               static_cast<std::streamsize>(t.values_.size() * sizeof(float)));
      os.close();
      if (os) fs::rename(tmp, side);
    }
    // an unwritable directory only costs the fast path next time
  }
  return t;
}

enum class OovPolicy { Zero, Strict };

/// Fixed-size embedded document: `max_tokens` rows of `dim` values. Rows at
/// index >= true_length are zero.
template <typename T>
struct TokenMatrix {
  Tensor<T> rows;
  std::size_t true_length = 0;
  std::size_t oov_count = 0;
};

/// Looks up each token; documents longer than `max_tokens` keep their first
/// `max_tokens` tokens, shorter ones are zero-padded. Unknown tokens map to
/// the zero vector (counted in oov_count) or raise MissingToken when strict.
template <typename T>
TokenMatrix<T> embed(const TokenSequence& tokens, const EmbeddingTable& table, std::size_t max_tokens = 500,
                     OovPolicy policy = OovPolicy::Zero) {
  TokenMatrix<T> m;
  const std::size_t dim = table.dim();
  m.rows = Tensor<T>({max_tokens, dim});
  m.true_length = std::min(tokens.size(), max_tokens);
  for (std::size_t i = 0; i < m.true_length; ++i) {
    const auto vec = table.find(tokens[i]);
    if (!vec) {
      if (policy == OovPolicy::Strict) fail(ErrorKind::MissingToken, "token not in embedding table: " + tokens[i]);
      ++m.oov_count;
      continue;
    }
    std::copy(vec->begin(), vec->end(), m.rows.data() + i * dim);
  }
  return m;
}

}  // namespace sidetune
