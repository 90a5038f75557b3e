#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "keci/corpus/schema.hpp"
#include "keci/eval/decode.hpp"

namespace keci::eval {

enum class Average { kMicro, kMacro };

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;

  static PRF from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    PRF r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
  }

  nlohmann::json to_json() const {
    return {{"precision", precision}, {"recall", recall}, {"f1", f1}, {"tp", tp}, {"fp", fp}, {"fn", fn}};
  }
};

namespace detail {

using EntityKey = std::tuple<std::size_t, std::size_t, std::size_t>;  // start, end, type
using RelationKey = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,
                               std::size_t>;  // head start/end/type, tail start/end/type, relation type

inline std::vector<EntityKey> entity_keys(const PredictedGraph& g) {
  std::vector<EntityKey> out;
  for (const auto& e : g.entities) out.emplace_back(e.span.start, e.span.end, e.type);
  return out;
}

inline std::vector<RelationKey> relation_keys(const PredictedGraph& g) {
  std::vector<RelationKey> out;
  for (const auto& r : g.relations) {
    const auto& h = g.entities.at(r.head);
    const auto& t = g.entities.at(r.tail);
    out.emplace_back(h.span.start, h.span.end, h.type, t.span.start, t.span.end, t.type, r.type);
  }
  return out;
}

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Per-type multiset match counts; `type_of` picks the bucket for a key.
template <typename Key, typename KeysFn, typename TypeFn>
std::map<std::size_t, Counts> count_by_type(const std::vector<PredictedGraph>& pred,
                                            const std::vector<PredictedGraph>& gold, KeysFn keys, TypeFn type_of) {
  if (pred.size() != gold.size()) {
    throw DimensionError("scoring " + std::to_string(pred.size()) + " predictions against " +
                         std::to_string(gold.size()) + " gold documents");
  }
  std::map<std::size_t, Counts> out;
  for (std::size_t d = 0; d < pred.size(); ++d) {
    std::map<Key, std::size_t> p, g;
    for (const auto& k : keys(pred[d])) ++p[k];
    for (const auto& k : keys(gold[d])) ++g[k];
    for (const auto& [k, c] : p) {
      const std::size_t gc = g.count(k) ? g.at(k) : 0;
      const std::size_t tp = std::min(c, gc);
      out[type_of(k)].tp += tp;
      out[type_of(k)].fp += c - tp;
    }
    for (const auto& [k, c] : g) {
      const std::size_t pc = p.count(k) ? p.at(k) : 0;
      out[type_of(k)].fn += c - std::min(c, pc);
    }
  }
  return out;
}

inline PRF aggregate(const std::map<std::size_t, Counts>& by_type, Average mode) {
  Counts total;
  for (const auto& [_, c] : by_type) {
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  if (mode == Average::kMicro) return PRF::from_counts(total.tp, total.fp, total.fn);
  // Macro: mean of per-type scores over the types that occur in gold.
  PRF r;
  r.tp = total.tp;
  r.fp = total.fp;
  r.fn = total.fn;
  std::size_t n = 0;
  for (const auto& [_, c] : by_type) {
    if (c.tp + c.fn == 0) continue;
    const PRF t = PRF::from_counts(c.tp, c.fp, c.fn);
    r.precision += t.precision;
    r.recall += t.recall;
    r.f1 += t.f1;
    ++n;
  }
  if (n > 0) {
    r.precision /= static_cast<double>(n);
    r.recall /= static_cast<double>(n);
    r.f1 /= static_cast<double>(n);
  }
  return r;
}

}  // namespace detail

/// Exact (start, end, type) matching with multiset semantics per document.
inline PRF score_entities(const std::vector<PredictedGraph>& pred, const std::vector<PredictedGraph>& gold,
                          Average mode) {
  using K = detail::EntityKey;
  const auto counts = detail::count_by_type<K>(pred, gold, detail::entity_keys, [](const K& k) { return std::get<2>(k); });
  return detail::aggregate(counts, mode);
}

/// Directed matching on both argument spans and types and the relation type.
inline PRF score_relations(const std::vector<PredictedGraph>& pred, const std::vector<PredictedGraph>& gold,
                           Average mode) {
  using K = detail::RelationKey;
  const auto counts =
      detail::count_by_type<K>(pred, gold, detail::relation_keys, [](const K& k) { return std::get<6>(k); });
  return detail::aggregate(counts, mode);
}

struct MetricsReport {
  PRF entity_micro, entity_macro, relation_micro, relation_macro;

  /// Mean of entity and relation micro-F1, used for model selection.
  double selection_score() const { return 0.5 * (entity_micro.f1 + relation_micro.f1); }

  nlohmann::json to_json() const {
    return {{"entity", {{"micro", entity_micro.to_json()}, {"macro", entity_macro.to_json()}}},
            {"relation", {{"micro", relation_micro.to_json()}, {"macro", relation_macro.to_json()}}}};
  }

  std::string table() const {
    std::string out = "task      avg    precision  recall     f1\n";
    char buf[128];
    const std::tuple<const char*, const char*, const PRF*> rows[] = {{"entity", "micro", &entity_micro},
                                                                     {"entity", "macro", &entity_macro},
                                                                     {"relation", "micro", &relation_micro},
                                                                     {"relation", "macro", &relation_macro}};
    for (const auto& [task, avg, prf] : rows) {
      std::snprintf(buf, sizeof buf, "%-9s %-6s %-10.4f %-10.4f %.4f\n", task, avg, prf->precision, prf->recall,
                    prf->f1);
      out += buf;
    }
    return out;
  }
};

inline MetricsReport evaluate_graphs(const std::vector<PredictedGraph>& pred, const std::vector<PredictedGraph>& gold) {
  return {score_entities(pred, gold, Average::kMicro), score_entities(pred, gold, Average::kMacro),
          score_relations(pred, gold, Average::kMicro), score_relations(pred, gold, Average::kMacro)};
}

}  // namespace keci::eval
