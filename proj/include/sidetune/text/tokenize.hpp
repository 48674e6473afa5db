// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sidetune {

using TokenSequence = std::vector<std::string>;

constexpr bool is_token_separator(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

/// Whitespace tokenization: maximal runs of non-whitespace bytes, in order.
/// Punctuation, digits and OCR artifacts are kept verbatim; nothing is
/// lowercased or filtered.
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_token_separator(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_token_separator(text[i])) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

inline std::string join_tokens(const TokenSequence& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace sidetune
