// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sidetune/core/sha256.hpp"
#include "sidetune/nn/module.hpp"

namespace sidetune::nn {

// Tensor archive: a single little-endian file holding JSON metadata and named
// float32 tensors. Layout:
//
//   "STARCH01"                      8 bytes
//   u64 metadata length, metadata   UTF-8 JSON
//   u64 tensor count
//   per tensor: u32 name length, name, u32 rank, u64 dims[rank], f32 values
//
// tools/export_torchvision_weights.py writes the same layout from a PyTorch
// state dict, so published backbone checkpoints load by parameter name.

inline constexpr char kArchiveMagic[8] = {'S', 'T', 'A', 'R', 'C', 'H', '0', '1'};

struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, Tensor<float>> tensors;
};

namespace detail {

template <typename U>
void write_pod(std::ostream& os, const U& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& is) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) fail(ErrorKind::IoError, "truncated archive");
  return v;
}

}  // namespace detail

inline void write_archive(const std::filesystem::path& path, const Archive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::IoError, "cannot write " + tmp.string());
    os.write(kArchiveMagic, sizeof(kArchiveMagic));
    const std::string meta = archive.metadata.dump();
    detail::write_pod<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    detail::write_pod<std::uint64_t>(os, archive.tensors.size());
    for (const auto& [name, t] : archive.tensors) {
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape()) detail::write_pod<std::uint64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!os) fail(ErrorKind::IoError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Archive read_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::IoError, "cannot open archive " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kArchiveMagic, sizeof(magic)) != 0)
    fail(ErrorKind::IoError, path.string() + " is not a tensor archive");
  Archive archive;
  const auto meta_len = detail::read_pod<std::uint64_t>(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta_len));
  archive.metadata = nlohmann::json::parse(meta);
  const auto count = detail::read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = detail::read_pod<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = detail::read_pod<std::uint64_t>(is);
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!is) fail(ErrorKind::IoError, "truncated tensor " + name + " in " + path.string());
    archive.tensors.emplace(std::move(name), std::move(t));
  }
  return archive;
}

template <typename T>
void store_parameters(const std::vector<NamedParameter<T>>& params, Archive& archive, const std::string& prefix = "") {
  for (const auto& np : params)
    archive.tensors[join_name(prefix, np.name)] = tensor_cast<float>(np.param->value);
}

/// Loads every listed parameter from the archive. Missing names or shape
/// differences are errors; extra archive entries (e.g. a classifier head) are ignored.
template <typename T>
void load_parameters(const std::vector<NamedParameter<T>>& params, const Archive& archive,
                     const std::string& prefix = "") {
  for (const auto& np : params) {
    const auto key = join_name(prefix, np.name);
    auto it = archive.tensors.find(key);
    if (it == archive.tensors.end()) fail(ErrorKind::CheckpointMismatch, "archive lacks tensor " + key);
    if (numel(it->second.shape()) != np.param->value.size())
      fail(ErrorKind::CheckpointMismatch, "tensor " + key + " has shape " + shape_string(it->second.shape()) +
                                              ", expected " + shape_string(np.param->value.shape()));
    np.param->value = tensor_cast<T>(it->second).reshaped(np.param->value.shape());
  }
}

/// SHA-256 over names, shapes and raw bytes of the given parameters.
template <typename T>
std::string parameter_hash(const std::vector<NamedParameter<T>>& params) {
  Sha256 h;
  for (const auto& np : params) {
    h.update(np.name);
    for (auto d : np.param->value.shape()) {
      const auto v = static_cast<std::uint64_t>(d);
      h.update(&v, sizeof(v));
    }
    h.update(np.param->value.data(), np.param->value.size() * sizeof(T));
  }
  return h.hex_digest();
}

}  // namespace sidetune::nn
