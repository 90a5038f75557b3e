#pragma once

#include <cmath>
#include <vector>

#include "keci/autodiff/tensor.hpp"
#include "keci/corpus/document.hpp"
#include "keci/spangraph/spangraph.hpp"
#include "keci/train/config.hpp"

namespace keci::eval {

struct PredictedEntity {
  corpus::Span span;
  std::size_t type = 0;

  bool operator==(const PredictedEntity&) const = default;
};

struct PredictedRelation {
  std::size_t head = 0;  // index into PredictedGraph::entities
  std::size_t tail = 0;
  std::size_t type = 0;

  bool operator==(const PredictedRelation&) const = default;
};

struct PredictedGraph {
  std::vector<PredictedEntity> entities;
  std::vector<PredictedRelation> relations;

  bool operator==(const PredictedGraph&) const = default;
};

/// Index of the largest entry in row `r`; ties go to the lowest index.
template <typename T>
std::size_t argmax_row(const ad::Tensor<T>& x, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < x.cols(); ++k)
    if (x.at(r, k) > x.at(r, best)) best = k;
  return best;
}

/// Kept spans whose argmax is an entity type become entities; relations are
/// read off the ordered pairs of those entities.
template <typename T>
PredictedGraph decode_graph(const ad::Tensor<T>& entity_probs, const ad::Tensor<T>& relation_logits,
                            const ad::Tensor<T>& relation_probs, const std::vector<spangraph::Pair>& pairs,
                            const std::vector<corpus::Span>& kept_spans, RelationLossMode mode) {
  PredictedGraph g;
  const std::size_t m = kept_spans.size();
  std::vector<std::ptrdiff_t> entity_of(m, -1);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t type = argmax_row(entity_probs, i);
    if (type == 0) continue;
    entity_of[i] = static_cast<std::ptrdiff_t>(g.entities.size());
    g.entities.push_back({kept_spans[i], type});
  }
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    if (entity_of[i] < 0 || entity_of[j] < 0) continue;
    const auto head = static_cast<std::size_t>(entity_of[i]), tail = static_cast<std::size_t>(entity_of[j]);
    if (mode == RelationLossMode::kSoftmaxCe) {
      const std::size_t k = argmax_row(relation_probs, p);
      if (k != 0) g.relations.push_back({head, tail, k});
    } else {
      for (std::size_t k = 1; k < relation_logits.cols(); ++k) {
        const double prob = 1.0 / (1.0 + std::exp(-static_cast<double>(relation_logits.at(p, k))));
        if (prob > 0.5) g.relations.push_back({head, tail, k});
      }
    }
  }
  return g;
}

inline PredictedGraph gold_graph(const corpus::Document& doc) {
  PredictedGraph g;
  for (const auto& e : doc.entities) g.entities.push_back({e.span, e.type});
  for (const auto& r : doc.relations) g.relations.push_back({r.head, r.tail, r.type});
  return g;
}

/// `doc` with its gold annotations replaced by `graph`.
inline corpus::Document with_predictions(corpus::Document doc, const PredictedGraph& graph) {
  doc.entities.clear();
  doc.relations.clear();
  for (const auto& e : graph.entities) doc.entities.push_back({e.span, e.type});
  for (const auto& r : graph.relations) doc.relations.push_back({r.head, r.tail, r.type});
  return doc;
}

}  // namespace keci::eval
