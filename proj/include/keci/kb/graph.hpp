#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "keci/autodiff/ops.hpp"
#include "keci/kb/knowledge_base.hpp"

namespace keci::kb {

enum class NodeKind { kEntity, kType };

struct KgNode {
  NodeKind kind;
  std::size_t ref;  // entity index or semantic type index in the KB

  bool operator==(const KgNode&) const = default;
};

struct KgEdge {
  std::size_t src;
  std::size_t relation;
  std::size_t dst;

  bool operator==(const KgEdge&) const = default;
};

/// Per-document background graph: entity nodes (sorted by id) followed by
/// type nodes (sorted by name).
struct KnowledgeGraph {
  std::vector<KgNode> nodes;
  std::vector<KgEdge> edges;
  std::vector<std::vector<std::size_t>> candidate_map;  // span -> entity node indices
  std::size_t num_entity_nodes = 0;

  std::size_t size() const { return nodes.size(); }
  bool empty() const { return nodes.empty(); }
  bool operator==(const KnowledgeGraph&) const = default;
};

inline KnowledgeGraph build_kg(const CandidateMap& candidates, const KnowledgeBase& kb) {
  KnowledgeGraph g;
  std::vector<std::size_t> ents;
  for (const auto& c : candidates) ents.insert(ents.end(), c.begin(), c.end());
  std::sort(ents.begin(), ents.end(),
            [&](std::size_t a, std::size_t b) { return kb.entities[a].id < kb.entities[b].id; });
  ents.erase(std::unique(ents.begin(), ents.end()), ents.end());

  std::vector<std::size_t> types;
  for (auto e : ents) types.insert(types.end(), kb.entities[e].semantic_types.begin(), kb.entities[e].semantic_types.end());
  std::sort(types.begin(), types.end(),
            [&](std::size_t a, std::size_t b) { return kb.semantic_types[a] < kb.semantic_types[b]; });
  types.erase(std::unique(types.begin(), types.end()), types.end());

  std::map<std::size_t, std::size_t> entity_node, type_node;
  for (auto e : ents) {
    entity_node[e] = g.nodes.size();
    g.nodes.push_back({NodeKind::kEntity, e});
  }
  g.num_entity_nodes = ents.size();
  for (auto t : types) {
    type_node[t] = g.nodes.size();
    g.nodes.push_back({NodeKind::kType, t});
  }

  for (auto e : ents)
    for (auto t : kb.entities[e].semantic_types)
      g.edges.push_back({entity_node.at(e), kb.has_type_relation(), type_node.at(t)});
  for (auto e : ents)
    for (auto t : kb.entities[e].semantic_types)
      g.edges.push_back({type_node.at(t), kb.type_of_relation(), entity_node.at(e)});
  for (const auto& edge : kb.entity_edges) {
    auto h = entity_node.find(edge.head), t = entity_node.find(edge.tail);
    if (h != entity_node.end() && t != entity_node.end()) g.edges.push_back({h->second, edge.relation, t->second});
  }
  for (const auto& edge : kb.type_edges) {
    auto h = type_node.find(edge.head), t = type_node.find(edge.tail);
    if (h != type_node.end() && t != type_node.end()) g.edges.push_back({h->second, edge.relation, t->second});
  }

  g.candidate_map.resize(candidates.size());
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    for (auto e : candidates[s]) g.candidate_map[s].push_back(entity_node.at(e));
    std::sort(g.candidate_map[s].begin(), g.candidate_map[s].end());
  }
  return g;
}

/// Text shown to the definition encoder for every node: entity definitions
/// and semantic type names.
inline std::vector<std::string> node_texts(const KnowledgeGraph& kg, const KnowledgeBase& kb) {
  std::vector<std::string> out;
  out.reserve(kg.size());
  for (const auto& n : kg.nodes)
    out.push_back(n.kind == NodeKind::kEntity ? kb.entities[n.ref].definition : kb.semantic_types[n.ref]);
  return out;
}

template <typename T>
using TextEmbedder = std::function<ad::Tensor<T>(const std::vector<std::string>&)>;

/// Initial node states [|V| x (d_kb + d_def)]. Entity rows hold the
/// pretrained KB embedding, type rows a learned row of `type_table`; both
/// are followed by the embedded definition (or type name).
template <typename T>
ad::Tensor<T> init_node_features(const KnowledgeGraph& kg, const KnowledgeBase& kb, const TextEmbedder<T>& embed_text,
                                 const ad::Tensor<T>& type_table) {
  const std::size_t d_kb = type_table.cols();
  std::vector<T> pretrained;
  pretrained.reserve(kg.num_entity_nodes * d_kb);
  std::vector<std::size_t> type_rows;
  for (const auto& n : kg.nodes) {
    if (n.kind == NodeKind::kEntity) {
      const auto& emb = kb.entities[n.ref].embedding;
      if (emb.size() != d_kb) {
        throw ValidationError("kb entity " + kb.entities[n.ref].id + " has embedding dim " +
                              std::to_string(emb.size()) + ", model expects " + std::to_string(d_kb));
      }
      for (double v : emb) pretrained.push_back(static_cast<T>(v));
    } else {
      type_rows.push_back(n.ref);
    }
  }
  ad::Tensor<T> entity_block({kg.num_entity_nodes, d_kb}, std::move(pretrained));
  ad::Tensor<T> type_block = ad::gather_rows(type_table, type_rows);
  ad::Tensor<T> kb_part = ad::concat<T>({entity_block, type_block}, 0);
  ad::Tensor<T> text_part = embed_text(node_texts(kg, kb));
  return ad::concat<T>({kb_part, text_part}, 1);
}

}  // namespace keci::kb
