#pragma once

#include <cctype>
#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace keci::corpus {

struct Token {
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;  // exclusive

  bool operator==(const Token&) const = default;
};

/// Token range [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  auto operator<=>(const Span&) const = default;
};

struct GoldEntity {
  Span span;
  std::size_t type = 0;  // schema entity index, never 0

  bool operator==(const GoldEntity&) const = default;
};

struct GoldRelation {
  std::size_t head = 0;  // index into Document::entities
  std::size_t tail = 0;
  std::size_t type = 0;  // schema relation index, never 0

  bool operator==(const GoldRelation&) const = default;
};

struct Document {
  std::string id;
  std::string text;
  std::vector<Token> tokens;
  std::vector<GoldEntity> entities;
  std::vector<GoldRelation> relations;

  std::size_t size() const { return tokens.size(); }

  /// Tokens of `span` joined by single spaces.
  std::string span_text(Span span) const {
    std::string out;
    for (std::size_t i = span.start; i < span.end; ++i) {
      if (i > span.start) out += ' ';
      out += tokens[i].text;
    }
    return out;
  }

  bool operator==(const Document&) const = default;
};

inline bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

/// Whitespace split, then each leading and trailing punctuation character
/// of a chunk becomes its own token.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_space(text[i])) ++i;
    if (i >= n) break;
    std::size_t end = i;
    while (end < n && !is_space(text[end])) ++end;
    std::size_t lo = i, hi = end;
    while (lo < hi && is_punct(text[lo])) ++lo;
    while (hi > lo && is_punct(text[hi - 1])) --hi;
    for (std::size_t p = i; p < lo; ++p) tokens.push_back({std::string(1, text[p]), p, p + 1});
    if (lo < hi) tokens.push_back({std::string(text.substr(lo, hi - lo)), lo, hi});
    for (std::size_t p = hi; p < end; ++p) tokens.push_back({std::string(1, text[p]), p, p + 1});
    i = end;
  }
  return tokens;
}

/// All spans of length 1..min(max_len, n), ordered by (start, end).
inline std::vector<Span> enumerate_spans(std::size_t n, std::size_t max_len) {
  std::vector<Span> spans;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t e = s + 1; e <= n && e - s <= max_len; ++e) spans.push_back({s, e});
  return spans;
}

}  // namespace keci::corpus
