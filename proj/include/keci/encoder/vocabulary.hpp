#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "keci/corpus/document.hpp"
#include "keci/error.hpp"

namespace keci::encoder {

/// Token to row map; row 0 is the unknown token.
class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary() { add(kUnkToken); }

  std::size_t add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, tokens_.size());
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  std::size_t index(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const auto& t : tokens) v.add(t);
    return v;
  }

  /// Training tokens seen at least `min_count` times, plus every token of
  /// `always` (KB definitions, type names). Insertion order is sorted so the
  /// layout only depends on the token sets.
  static Vocabulary build(const std::vector<corpus::Document>& docs, std::size_t min_count,
                          const std::vector<std::string>& always = {}) {
    std::map<std::string, std::size_t> counts;
    for (const auto& d : docs)
      for (const auto& t : d.tokens) ++counts[t.text];
    std::map<std::string, bool> keep;
    for (const auto& [tok, c] : counts)
      if (c >= min_count) keep[tok] = true;
    for (const auto& text : always)
      for (const auto& t : corpus::tokenize(text)) keep[t.text] = true;
    Vocabulary v;
    for (const auto& [tok, _] : keep) v.add(tok);
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddingFile {
  std::vector<std::string> tokens;
  std::size_t dim = 0;
  std::vector<double> values;  // tokens.size() x dim
};

/// Text format: "<vocab_size> <dim>" then "<token> <f1> ... <fdim>" per line.
inline EmbeddingFile read_embedding_file(std::istream& in) {
  EmbeddingFile out;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("embedding file: missing header");
  std::size_t count = 0;
  {
    std::istringstream hs(line);
    if (!(hs >> count >> out.dim) || out.dim == 0) throw ParseError("embedding file: bad header '" + line + "'");
  }
  std::size_t line_no = 1;
  while (out.tokens.size() < count && std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    for (std::size_t k = 0; k < out.dim; ++k) {
      double v;
      if (!(ls >> v)) throw ParseError("embedding file line " + std::to_string(line_no) + ": too few values");
      out.values.push_back(v);
    }
    std::string extra;
    if (ls >> extra) throw ParseError("embedding file line " + std::to_string(line_no) + ": too many values");
    out.tokens.push_back(tok);
  }
  if (out.tokens.size() != count) {
    throw ParseError("embedding file: header declares " + std::to_string(count) + " rows, found " +
                     std::to_string(out.tokens.size()));
  }
  return out;
}

inline EmbeddingFile read_embedding_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open embedding file " + path);
  return read_embedding_file(in);
}

}  // namespace keci::encoder
