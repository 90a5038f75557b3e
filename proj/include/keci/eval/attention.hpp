#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "keci/eval/predict.hpp"
#include "keci/fusion/fusion.hpp"
#include "keci/kb/graph.hpp"
#include "keci/train/model.hpp"

namespace keci::eval {

struct AttentionStat {
  double sum = 0.0;
  std::size_t count = 0;

  double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
};

/// Average attention weight per candidate semantic type, plus the average
/// sentinel weight over all kept spans.
struct AttentionReport {
  std::map<std::string, AttentionStat> by_type;
  AttentionStat sentinel;

  /// 1.0 when no span was seen: nothing was diverted to candidates.
  double sentinel_mean() const { return sentinel.count == 0 ? 1.0 : sentinel.mean(); }

  std::map<std::string, double> means() const {
    std::map<std::string, double> out;
    for (const auto& [t, s] : by_type) out[t] = s.mean();
    return out;
  }

  /// Mean of the per-candidate weights whose type is in `types`.
  double pooled_mean(const std::vector<std::string>& types) const {
    AttentionStat s;
    for (const auto& t : types) {
      auto it = by_type.find(t);
      if (it == by_type.end()) continue;
      s.sum += it->second.sum;
      s.count += it->second.count;
    }
    return s.mean();
  }

  nlohmann::json to_json() const {
    nlohmann::json types = nlohmann::json::object();
    for (const auto& [t, s] : by_type) types[t] = {{"mean", s.mean()}, {"count", s.count}};
    return {{"semantic_types", types}, {"sentinel", {{"mean", sentinel_mean()}, {"count", sentinel.count}}}};
  }
};

/// Adds one document's attention weights. `state.candidates` hold KG node
/// indices; each candidate contributes once per semantic type it carries.
template <typename T>
void accumulate_attention(const fusion::FusionState<T>& state, const kb::KnowledgeGraph& kg,
                          const kb::KnowledgeBase& kb, AttentionReport& report) {
  for (std::size_t i = 0; i < state.num_spans(); ++i) {
    report.sentinel.sum += static_cast<double>(state.sentinel_weight(i));
    ++report.sentinel.count;
    for (std::size_t c = 0; c < state.candidates[i].size(); ++c) {
      const auto& node = kg.nodes.at(state.candidates[i][c]);
      if (node.kind != kb::NodeKind::kEntity) continue;
      const double w = static_cast<double>(state.candidate_weight(i, c));
      for (auto t : kb.entities[node.ref].semantic_types) {
        auto& s = report.by_type[kb.semantic_types[t]];
        s.sum += w;
        ++s.count;
      }
    }
  }
}

template <typename T>
AttentionReport attention_report(const train::KeciModel<T>& model, const std::vector<train::PreparedDocument>& docs,
                                 const kb::KnowledgeBase& kb) {
  if (!train::uses_kb(model.variant())) throw ArgumentError("attention report needs a variant that uses the KB");
  AttentionReport report;
  ad::NoGradScope<T> no_grad;
  for (const auto& doc : docs) {
    const auto fwd = model.forward(doc);
    if (fwd.fusion) accumulate_attention(*fwd.fusion, doc.kg, kb, report);
  }
  return report;
}

}  // namespace keci::eval
