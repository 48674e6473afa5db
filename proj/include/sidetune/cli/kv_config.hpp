// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sidetune/core/error.hpp"

namespace sidetune {

/// Flat `key = value` file. '#' starts a comment, blank lines are ignored,
/// lists are written `[a, b, c]`. Duplicate keys are rejected.
class KvConfig {
 public:
  struct Entry {
    std::string key;
    std::string value;
    std::size_t line = 0;
  };

  static KvConfig parse(std::string_view text, const std::string& source = "<config>") {
    KvConfig cfg;
    cfg.source_ = source;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        fail(ErrorKind::ConfigError, source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      Entry e{trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)), line_no};
      if (e.key.empty()) fail(ErrorKind::ConfigError, source + ":" + std::to_string(line_no) + ": empty key");
      if (const auto* prev = cfg.find_entry(e.key))
        fail(ErrorKind::ConfigError, source + ":" + std::to_string(line_no) + ": duplicate key '" + e.key +
                                         "' (first set on line " + std::to_string(prev->line) + ")");
      cfg.entries_.push_back(std::move(e));
    }
    return cfg;
  }

  static KvConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ConfigError, "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const std::string& source() const noexcept { return source_; }

  std::optional<std::string> get(const std::string& key) const {
    used_.insert(key);
    if (const auto* e = find_entry(key)) return e->value;
    return std::nullopt;
  }

  void set(const std::string& key, std::string value) {
    for (auto& e : entries_)
      if (e.key == key) {
        e.value = std::move(value);
        return;
      }
    entries_.push_back({key, std::move(value), 0});
  }

  /// Keys present in the file but never read.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (!used_.count(e.key)) out.push_back(e.key);
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

 private:
  const Entry* find_entry(const std::string& key) const {
    for (const auto& e : entries_)
      if (e.key == key) return &e;
    return nullptr;
  }

  std::string source_;
  std::vector<Entry> entries_;
  mutable std::set<std::string> used_;
};

// Value parsers. `what` names the key in error messages.

inline std::vector<std::string> parse_list(const std::string& value, const std::string& what) {
  std::string body = KvConfig::trim(value);
  if (!body.empty() && body.front() == '[') {
    if (body.back() != ']') fail(ErrorKind::ConfigError, what + ": unterminated list '" + value + "'");
    body = body.substr(1, body.size() - 2);
  }
  std::vector<std::string> items;
  std::string cur;
  std::istringstream ss(body);
  while (std::getline(ss, cur, ',')) {
    const auto item = KvConfig::trim(cur);
    if (item.empty()) {
      if (KvConfig::trim(body).empty()) break;
      fail(ErrorKind::ConfigError, what + ": empty list element in '" + value + "'");
    }
    items.push_back(item);
  }
  return items;
}

inline double parse_real(const std::string& value, const std::string& what) {
  double v = 0.0;
  const auto s = KvConfig::trim(value);
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) fail(ErrorKind::ConfigError, what + ": '" + value + "' is not a number");
  return v;
}

inline std::uint64_t parse_unsigned(const std::string& value, const std::string& what) {
  std::uint64_t v = 0;
  const auto s = KvConfig::trim(value);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    fail(ErrorKind::ConfigError, what + ": '" + value + "' is not a non-negative integer");
  return v;
}

inline bool parse_bool(const std::string& value, const std::string& what) {
  const auto s = KvConfig::trim(value);
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  fail(ErrorKind::ConfigError, what + ": '" + value + "' is not a boolean");
}

inline std::vector<double> parse_real_list(const std::string& value, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : parse_list(value, what)) out.push_back(parse_real(item, what));
  return out;
}

/// Shortest round-trip decimal form.
inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename Range, typename Fn>
std::string format_list(const Range& items, Fn&& fmt) {
  std::string out = "[";
  bool first = true;
  for (const auto& item : items) {
    out += first ? "" : ", ";
    out += fmt(item);
    first = false;
  }
  return out + "]";
}

}  // namespace sidetune
