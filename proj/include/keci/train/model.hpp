#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "keci/autodiff/ops.hpp"
#include "keci/autodiff/parameter_store.hpp"
#include "keci/corpus/document.hpp"
#include "keci/corpus/schema.hpp"
#include "keci/encoder/span_encoder.hpp"
#include "keci/encoder/vocabulary.hpp"
#include "keci/fusion/fusion.hpp"
#include "keci/kb/graph.hpp"
#include "keci/kb/knowledge_base.hpp"
#include "keci/kgnn/rgcn.hpp"
#include "keci/spangraph/spangraph.hpp"
#include "keci/train/config.hpp"

namespace keci::train {

using ad::Tensor;

enum class Variant { kFull, kSentContextOnly, kFlatAttention, kNoBigcn, kNoRgcn };

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::kFull, Variant::kSentContextOnly, Variant::kFlatAttention,
                                      Variant::kNoBigcn, Variant::kNoRgcn};
  return v;
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kSentContextOnly: return "sent_context_only";
    case Variant::kFlatAttention: return "flat_attention";
    case Variant::kNoBigcn: return "no_bigcn";
    case Variant::kNoRgcn: return "no_rgcn";
  }
  return "full";
}

inline Variant parse_variant(const std::string& name) {
  for (auto v : all_variants())
    if (to_string(v) == name) return v;
  throw ArgumentError("unknown variant '" + name +
                      "' (expected full, sent_context_only, flat_attention, no_bigcn or no_rgcn)");
}

inline bool uses_kb(Variant v) { return v != Variant::kSentContextOnly; }
inline bool uses_bigcn(Variant v) { return v == Variant::kFull || v == Variant::kNoRgcn; }
inline bool uses_rgcn(Variant v) { return v == Variant::kFull || v == Variant::kNoBigcn; }

/// Sizes the model needs from the KB; zero when no KB is used.
struct KbShape {
  std::size_t num_semantic_types = 0;
  std::size_t num_relations = 0;  // including HAS_TYPE / TYPE_OF
  std::size_t embedding_dim = 0;

  static KbShape of(const kb::KnowledgeBase& kb) {
    return {kb.semantic_types.size(), kb.kb_relations.size(), kb.embedding_dim()};
  }
  bool operator==(const KbShape&) const = default;
};

/// Per-document inputs that do not depend on parameters.
struct PreparedDocument {
  corpus::Document doc;
  std::vector<std::size_t> token_ids;
  std::vector<corpus::Span> spans;
  std::vector<std::size_t> entity_targets;  // per span, 0 = non-entity
  std::vector<std::size_t> gold_head_span, gold_tail_span, gold_relation_type;
  kb::KnowledgeGraph kg;
  const kb::KnowledgeBase* kb = nullptr;

  /// Gold relation types linking span a to span b, in document order.
  std::vector<std::size_t> relation_types(std::size_t a, std::size_t b) const {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < gold_relation_type.size(); ++g)
      if (gold_head_span[g] == a && gold_tail_span[g] == b) out.push_back(gold_relation_type[g]);
    return out;
  }
};

template <typename T>
struct ForwardResult {
  std::vector<corpus::Span> spans;
  Tensor<T> span_states;  // s [m_all x d]
  spangraph::InitialPrediction<T> initial;
  Tensor<T> h;            // [m x d]
  Tensor<T> node_states;  // n [|V| x d]
  std::vector<std::vector<std::size_t>> candidates;  // KG nodes per kept span
  std::optional<fusion::FusionState<T>> fusion;
  std::optional<fusion::FinalPrediction<T>> final;

  std::vector<corpus::Span> kept_spans() const {
    std::vector<corpus::Span> out;
    for (auto i : initial.kept) out.push_back(spans[i]);
    return out;
  }

  /// Distributions used for decoding: the final graph when present,
  /// otherwise the initial predictions restricted to kept spans.
  Tensor<T> decode_entity_probs() const {
    if (final) return final->entity_probs;
    ad::NoGradScope<T> no_grad;
    return ad::gather_rows(initial.entity_probs, initial.kept);
  }
  Tensor<T> decode_relation_logits() const { return final ? final->relation_logits : initial.relation_logits; }
  Tensor<T> decode_relation_probs() const { return final ? final->relation_probs : initial.relation_probs; }
};

/// Tokens of KB definitions and type names, which the definition encoder reads.
inline std::vector<std::string> kb_texts(const kb::KnowledgeBase& kb) {
  std::vector<std::string> out = kb.semantic_types;
  for (const auto& e : kb.entities) out.push_back(e.definition);
  return out;
}

inline encoder::Vocabulary build_vocabulary(const std::vector<corpus::Document>& train, const ModelConfig& config,
                                            const kb::KnowledgeBase* kb) {
  return encoder::Vocabulary::build(train, config.vocab_min_count, kb ? kb_texts(*kb) : std::vector<std::string>{});
}

template <typename T>
class KeciModel {
 public:
  KeciModel(ModelConfig config, Variant variant, corpus::TaskSchema schema, encoder::Vocabulary vocab, KbShape kb)
      : config_(std::move(config)), variant_(variant), schema_(std::move(schema)), kb_shape_(kb) {
    config_.validate();
    const std::size_t ne = schema_.num_entity_types(), nr = schema_.num_relation_types();
    // Each component draws from its own stream so that variants share the
    // initial values of the parameters they have in common.
    auto rng = [&](std::uint64_t tag) { return Rng(config_.seed * 0x9E3779B97F4A7C15ULL + tag); };
    Rng r_tok = rng(1), r_enc = rng(2), r_ent = rng(3), r_rel = rng(4), r_gcn = rng(5), r_type = rng(6),
        r_rgcn = rng(7), r_proj = rng(8), r_fuse = rng(9), r_final = rng(10);
    embeddings_ = encoder::EmbeddingProvider<T>(std::move(vocab), store_, config_.d_tok, r_tok, config_.position_encoding);
    encoder_ = encoder::SpanEncoder<T>(store_, config_, r_enc);
    entity_ = spangraph::EntityClassifier<T>::create(store_, "spangraph.ffnn_e", config_.d, ne, r_ent);
    relation_ = spangraph::RelationClassifier<T>::create(store_, "spangraph.ffnn_r", config_.d, config_.hidden(), nr, r_rel);
    if (uses_bigcn(variant_)) bigcn_ = spangraph::BiGcn<T>(store_, config_, nr, r_gcn);
    if (uses_kb(variant_)) {
      if (kb_shape_.embedding_dim != 0 && kb_shape_.embedding_dim != config_.d_kb) {
        throw ValidationError("kb embedding dim " + std::to_string(kb_shape_.embedding_dim) + " != d_kb " +
                              std::to_string(config_.d_kb));
      }
      type_table_ = store_.add("kb.type.table", nn::gaussian<T>({std::max<std::size_t>(kb_shape_.num_semantic_types, 1),
                                                                  config_.d_kb},
                                                                 1.0 / std::sqrt(double(config_.d_kb)), r_type));
      if (uses_rgcn(variant_)) rgcn_ = kgnn::Rgcn<T>(store_, config_.node_dim(), kb_shape_.num_relations, config_.rgcn_layers, r_rgcn);
      projection_ = kgnn::NodeProjection<T>::create(store_, config_.node_dim(), config_.d, r_proj);
      fusion_ = fusion::Fusion<T>(store_, config_, r_fuse);
      final_ = fusion::FinalClassifier<T>(store_, config_, ne, nr, r_final);
    }
    if (config_.freeze_token_embeddings) store_.get(encoder::EmbeddingProvider<T>::kTableName).set_requires_grad(false);
  }

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return variant_; }
  const corpus::TaskSchema& schema() const { return schema_; }
  const encoder::Vocabulary& vocab() const { return embeddings_.vocab(); }
  const KbShape& kb_shape() const { return kb_shape_; }
  ad::ParameterStore<T>& params() { return store_; }
  const ad::ParameterStore<T>& params() const { return store_; }
  encoder::EmbeddingProvider<T>& embeddings() { return embeddings_; }
  const encoder::EmbeddingProvider<T>& embeddings() const { return embeddings_; }
  const encoder::SpanEncoder<T>& span_encoder() const { return encoder_; }
  const fusion::Fusion<T>& fusion_layer() const { return fusion_; }

  /// Enumerates spans, aligns gold labels and, for KB variants, links
  /// candidates and builds the document's background graph.
  PreparedDocument prepare(const corpus::Document& doc, const kb::KnowledgeBase* kb) const {
    PreparedDocument p;
    p.doc = doc;
    p.token_ids = embeddings_.token_ids(doc.tokens);
    p.spans = corpus::enumerate_spans(doc.size(), config_.max_span_length);
    p.entity_targets.assign(p.spans.size(), 0);
    std::vector<std::optional<std::size_t>> entity_span(doc.entities.size());
    for (std::size_t g = 0; g < doc.entities.size(); ++g) {
      const auto& ent = doc.entities[g];
      auto it = std::lower_bound(p.spans.begin(), p.spans.end(), ent.span);
      if (it == p.spans.end() || *it != ent.span) continue;  // longer than the span limit
      const auto idx = static_cast<std::size_t>(it - p.spans.begin());
      entity_span[g] = idx;
      if (p.entity_targets[idx] == 0) p.entity_targets[idx] = ent.type;
    }
    for (const auto& rel : doc.relations) {
      if (!entity_span[rel.head] || !entity_span[rel.tail]) continue;
      p.gold_head_span.push_back(*entity_span[rel.head]);
      p.gold_tail_span.push_back(*entity_span[rel.tail]);
      p.gold_relation_type.push_back(rel.type);
    }
    if (uses_kb(variant_) && kb != nullptr) {
      if (KbShape::of(*kb) != kb_shape_) throw ValidationError("knowledge base does not match the model's KB shape");
      p.kb = kb;
      p.kg = kb::build_kg(kb::link_candidates(doc, p.spans, *kb), *kb);
    }
    return p;
  }

  ForwardResult<T> forward(const PreparedDocument& p) const {
    ForwardResult<T> out;
    out.spans = p.spans;
    const std::size_t n = p.doc.size();
    const std::size_t ne = schema_.num_entity_types(), nr = schema_.num_relation_types();
    if (p.spans.empty()) {
      out.span_states = Tensor<T>::zeros({0, config_.d});
      out.initial.entity_probs = Tensor<T>::zeros({0, ne});
      out.initial.relation_logits = out.initial.relation_probs = Tensor<T>::zeros({0, nr});
      return out;
    }
    const Tensor<T> x = embeddings_.embed_ids(p.token_ids);
    out.span_states = encoder_.encode_spans(x, p.spans);
    auto& init = out.initial;
    init.entity_probs = entity_(out.span_states);
    init.kept = spangraph::prune_spans(init.entity_probs, config_.prune_ratio, n);
    init.pairs = spangraph::ordered_pairs(init.kept.size());
    const Tensor<T> s_kept = ad::gather_rows(out.span_states, init.kept);
    init.relation_logits = relation_.logits(s_kept, init.pairs);
    init.relation_probs = ad::softmax(init.relation_logits, 1);
    if (!uses_kb(variant_)) return out;

    out.h = uses_bigcn(variant_) ? bigcn_.forward(s_kept, init.relation_probs, init.pairs) : s_kept;
    if (p.kg.empty()) {
      out.node_states = Tensor<T>::zeros({0, config_.d});
    } else {
      const kb::TextEmbedder<T> embed = [this](const std::vector<std::string>& t) { return embeddings_.embed_texts(t); };
      Tensor<T> v = kb::init_node_features(p.kg, *p.kb, embed, type_table_);
      if (uses_rgcn(variant_)) v = rgcn_.forward(p.kg, v);
      out.node_states = projection_(v);
    }
    for (auto i : init.kept)
      out.candidates.push_back(p.kg.candidate_map.empty() ? std::vector<std::size_t>{} : p.kg.candidate_map[i]);
    out.fusion = fusion_.fuse(out.h, out.node_states, out.candidates);
    out.final = final_(out.fusion->fused, init.pairs);
    return out;
  }

 private:
  ModelConfig config_;
  Variant variant_;
  corpus::TaskSchema schema_;
  KbShape kb_shape_;
  ad::ParameterStore<T> store_;
  encoder::EmbeddingProvider<T> embeddings_;
  encoder::SpanEncoder<T> encoder_;
  spangraph::EntityClassifier<T> entity_;
  spangraph::RelationClassifier<T> relation_;
  spangraph::BiGcn<T> bigcn_;
  Tensor<T> type_table_;
  kgnn::Rgcn<T> rgcn_;
  kgnn::NodeProjection<T> projection_;
  fusion::Fusion<T> fusion_;
  fusion::FinalClassifier<T> final_;
};

}  // namespace keci::train
