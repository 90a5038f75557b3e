#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "keci/autodiff/ops.hpp"
#include "keci/corpus/document.hpp"
#include "keci/encoder/vocabulary.hpp"
#include "keci/nn/layers.hpp"
#include "keci/train/config.hpp"

namespace keci::encoder {

using ad::Tensor;

/// Sinusoidal position code [n x d].
template <typename T>
Tensor<T> position_encoding(std::size_t n, std::size_t d) {
  std::vector<T> v(n * d);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) / rate;
      v[pos * d + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return Tensor<T>({n, d}, std::move(v));
}

/// Trainable token lookup table standing in for a contextual encoder.
template <typename T>
class EmbeddingProvider {
 public:
  static constexpr const char* kTableName = "encoder.token.table";

  EmbeddingProvider() = default;

  EmbeddingProvider(Vocabulary vocab, ad::ParameterStore<T>& store, std::size_t dim, Rng& rng,
                    bool position_encoding = false)
      : vocab_(std::move(vocab)), position_encoding_(position_encoding) {
    table_ = store.add(kTableName, nn::gaussian<T>({vocab_.size(), dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng));
  }

  const Vocabulary& vocab() const { return vocab_; }
  const Tensor<T>& table() const { return table_; }
  std::size_t dim() const { return table_.cols(); }

  /// Overwrites rows of known tokens with pretrained vectors.
  std::size_t load_pretrained(const EmbeddingFile& file) {
    if (file.dim != dim()) {
      throw ValidationError("embedding file dim " + std::to_string(file.dim) + " != d_tok " + std::to_string(dim()));
    }
    std::size_t hits = 0;
    auto values = table_.mutable_values();
    for (std::size_t r = 0; r < file.tokens.size(); ++r) {
      if (!vocab_.contains(file.tokens[r])) continue;
      const std::size_t row = vocab_.index(file.tokens[r]);
      for (std::size_t k = 0; k < file.dim; ++k) values[row * file.dim + k] = static_cast<T>(file.values[r * file.dim + k]);
      ++hits;
    }
    return hits;
  }

  std::vector<std::size_t> token_ids(const std::vector<corpus::Token>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab_.index(t.text));
    return ids;
  }

  /// X [n x d_tok]: table rows (UNK for unknown tokens), plus positions when enabled.
  Tensor<T> embed_ids(const std::vector<std::size_t>& ids) const {
    Tensor<T> x = ad::gather_rows(table_, ids);
    if (position_encoding_ && !ids.empty()) x = ad::add(x, position_encoding<T>(ids.size(), dim()));
    return x;
  }

  Tensor<T> embed_tokens(const corpus::Document& doc) const { return embed_ids(token_ids(doc.tokens)); }

  /// Mean token embedding of each text [k x d_tok]; empty text gives zeros.
  Tensor<T> embed_texts(const std::vector<std::string>& texts) const {
    std::vector<std::size_t> ids;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (const auto& text : texts) {
      const std::size_t begin = ids.size();
      for (const auto& t : corpus::tokenize(text)) ids.push_back(vocab_.index(t.text));
      ranges.emplace_back(begin, ids.size());
    }
    if (ids.empty()) return Tensor<T>::zeros({texts.size(), dim()});
    std::vector<T> avg(texts.size() * ids.size(), T{0});
    for (std::size_t i = 0; i < ranges.size(); ++i) {
      const auto [b, e] = ranges[i];
      for (std::size_t p = b; p < e; ++p) avg[i * ids.size() + p] = T{1} / static_cast<T>(e - b);
    }
    return ad::matmul(Tensor<T>({texts.size(), ids.size()}, std::move(avg)), ad::gather_rows(table_, ids));
  }

  Tensor<T> embed_text(const std::string& text) const { return embed_texts({text}); }

 private:
  Vocabulary vocab_;
  Tensor<T> table_;
  bool position_encoding_ = false;
};

/// s_i = FFNN_g([x_start, x_last, attention-pooled x, length feature]).
template <typename T>
class SpanEncoder {
 public:
  SpanEncoder() = default;

  SpanEncoder(ad::ParameterStore<T>& store, const ModelConfig& config, Rng& rng)
      : max_length_(config.max_span_length) {
    attention_ = store.add("encoder.attn.weight", nn::xavier<T>(config.d_tok, 1, rng));
    length_table_ = store.add("encoder.length.table",
                              nn::gaussian<T>({config.max_span_length, config.d_len}, 1.0 / std::sqrt(double(config.d_len)), rng));
    ffnn_g_ = nn::Mlp<T>::create(store, "encoder.ffnn_g", 3 * config.d_tok + config.d_len, config.hidden(), config.d, rng);
  }

  const Tensor<T>& length_table() const { return length_table_; }
  const Tensor<T>& attention_vector() const { return attention_; }

  /// Softmax weights of the tokens in `span` under the attention vector.
  std::vector<T> attention_weights(const Tensor<T>& x, corpus::Span span) const {
    ad::NoGradScope<T> no_grad;
    const Tensor<T> scores = ad::matmul(x, attention_);
    std::vector<T> u(scores.values().begin() + span.start, scores.values().begin() + span.end);
    const Tensor<T> w = ad::softmax(Tensor<T>::vector(u), 0);
    return w.vec();
  }

  /// Attention-weighted sum of the span's token vectors [1 x d_tok].
  Tensor<T> head_attention(const Tensor<T>& x, corpus::Span span) const {
    if (span.start >= span.end) throw ContractError("head_attention on an empty span");
    return ad::span_attention_pool(x, ad::matmul(x, attention_), {{span.start, span.end}});
  }

  /// Learned row for (length - 1), [1 x d_len].
  Tensor<T> span_length_feature(corpus::Span span) const {
    check_length(span);
    return ad::gather_rows(length_table_, {span.length() - 1});
  }

  /// Span representations [m x d], row order follows `spans`.
  Tensor<T> encode_spans(const Tensor<T>& x, const std::vector<corpus::Span>& spans) const {
    if (spans.empty()) return Tensor<T>::zeros({0, ffnn_g_.output.out_dim()});
    std::vector<std::size_t> starts, lasts, lengths;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (const auto& s : spans) {
      check_length(s);
      if (s.end > x.rows()) throw ContractError("span end beyond document length");
      starts.push_back(s.start);
      lasts.push_back(s.end - 1);
      lengths.push_back(s.length() - 1);
      ranges.emplace_back(s.start, s.end);
    }
    const Tensor<T> pooled = ad::span_attention_pool(x, ad::matmul(x, attention_), ranges);
    const Tensor<T> input = ad::concat<T>(
        {ad::gather_rows(x, starts), ad::gather_rows(x, lasts), pooled, ad::gather_rows(length_table_, lengths)}, 1);
    return ffnn_g_(input);
  }

 private:
  void check_length(corpus::Span span) const {
    if (span.length() < 1 || span.length() > max_length_) {
      throw ContractError("span length " + std::to_string(span.length()) + " outside [1, " +
                          std::to_string(max_length_) + "]");
    }
  }

  std::size_t max_length_ = 0;
  Tensor<T> attention_;
  Tensor<T> length_table_;
  nn::Mlp<T> ffnn_g_;
};

}  // namespace keci::encoder
