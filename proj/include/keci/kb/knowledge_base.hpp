#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "keci/corpus/document.hpp"
#include "keci/error.hpp"

namespace keci::kb {

inline constexpr const char* kHasType = "HAS_TYPE";
inline constexpr const char* kTypeOf = "TYPE_OF";

struct KBEntity {
  std::string id;
  std::vector<std::string> aliases;
  std::string definition;
  std::vector<std::size_t> semantic_types;  // indices into KnowledgeBase::semantic_types
  std::vector<double> embedding;
};

struct KBEdge {
  std::size_t head = 0;
  std::size_t relation = 0;  // index into KnowledgeBase::kb_relations
  std::size_t tail = 0;
};

/// Lowercase, drop punctuation, collapse whitespace.
inline std::string normalize_alias(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (corpus::is_punct(c)) continue;
    if (corpus::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

/// Immutable local knowledge base. `kb_relations` ends with the reserved
/// HAS_TYPE and TYPE_OF relations.
class KnowledgeBase {
 public:
  std::vector<KBEntity> entities;
  std::vector<std::string> semantic_types;
  std::vector<std::string> kb_relations;
  std::vector<KBEdge> entity_edges;  // head/tail index entities
  std::vector<KBEdge> type_edges;    // head/tail index semantic_types

  std::size_t embedding_dim() const { return embedding_dim_; }
  std::size_t has_type_relation() const { return kb_relations.size() - 2; }
  std::size_t type_of_relation() const { return kb_relations.size() - 1; }

  /// Entities whose normalized alias equals normalize_alias(text), in KB order.
  const std::vector<std::size_t>& lookup(const std::string& text) const {
    static const std::vector<std::size_t> kNone;
    auto it = alias_index_.find(normalize_alias(text));
    return it == alias_index_.end() ? kNone : it->second;
  }

  static KnowledgeBase from_json(const nlohmann::json& j) {
    KnowledgeBase kb;
    try {
      kb.semantic_types = j.at("semantic_types").get<std::vector<std::string>>();
      kb.kb_relations = j.at("kb_relations").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("kb: ") + e.what());
    }
    const auto type_index = index_names(kb.semantic_types, "semantic type");
    for (const auto& r : kb.kb_relations)
      if (r == kHasType || r == kTypeOf) throw ValidationError("kb: reserved relation " + r + " in kb_relations");
    auto relation_index = index_names(kb.kb_relations, "kb relation");
    kb.kb_relations.push_back(kHasType);
    kb.kb_relations.push_back(kTypeOf);

    std::map<std::string, std::size_t> entity_index;
    bool have_dim = false;
    try {
      for (const auto& e : j.value("entities", nlohmann::json::array())) {
        KBEntity ent;
        ent.id = e.at("id").get<std::string>();
        ent.aliases = e.at("aliases").get<std::vector<std::string>>();
        ent.definition = e.value("definition", std::string{});
        ent.embedding = e.at("embedding").get<std::vector<double>>();
        if (ent.aliases.empty()) throw ValidationError("kb: entity " + ent.id + " has no aliases");
        for (const auto& t : e.at("semantic_types").get<std::vector<std::string>>()) {
          auto it = type_index.find(t);
          if (it == type_index.end()) throw ValidationError("kb: entity " + ent.id + " has unknown semantic type " + t);
          ent.semantic_types.push_back(it->second);
        }
        if (ent.semantic_types.empty()) throw ValidationError("kb: entity " + ent.id + " has no semantic type");
        if (!have_dim) {
          kb.embedding_dim_ = ent.embedding.size();
          have_dim = true;
        } else if (ent.embedding.size() != kb.embedding_dim_) {
          throw ValidationError("kb: entity " + ent.id + " has embedding dim " + std::to_string(ent.embedding.size()) +
                                ", expected " + std::to_string(kb.embedding_dim_));
        }
        if (!entity_index.emplace(ent.id, kb.entities.size()).second)
          throw ValidationError("kb: duplicate entity id " + ent.id);
        kb.entities.push_back(std::move(ent));
      }
      auto edge = [&](const nlohmann::json& e, const std::map<std::string, std::size_t>& nodes,
                      const char* what) {
        if (!e.is_array() || e.size() != 3) throw ParseError(std::string("kb: ") + what + " must be [head, rel, tail]");
        const auto h = e[0].get<std::string>(), r = e[1].get<std::string>(), t = e[2].get<std::string>();
        auto hi = nodes.find(h), ti = nodes.find(t);
        auto ri = relation_index.find(r);
        if (hi == nodes.end()) throw ValidationError(std::string("kb: dangling ") + what + " head " + h);
        if (ti == nodes.end()) throw ValidationError(std::string("kb: dangling ") + what + " tail " + t);
        if (ri == relation_index.end()) throw ValidationError(std::string("kb: ") + what + " uses unknown relation " + r);
        return KBEdge{hi->second, ri->second, ti->second};
      };
      for (const auto& e : j.value("entity_edges", nlohmann::json::array()))
        kb.entity_edges.push_back(edge(e, entity_index, "entity edge"));
      for (const auto& e : j.value("type_edges", nlohmann::json::array()))
        kb.type_edges.push_back(edge(e, type_index, "type edge"));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("kb: ") + e.what());
    }
    kb.build_alias_index();
    return kb;
  }

 private:
  static std::map<std::string, std::size_t> index_names(const std::vector<std::string>& names, const char* what) {
    std::map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < names.size(); ++i)
      if (!out.emplace(names[i], i).second) throw ValidationError(std::string("kb: duplicate ") + what + " " + names[i]);
    return out;
  }

  void build_alias_index() {
    for (std::size_t i = 0; i < entities.size(); ++i) {
      std::set<std::string> seen;
      for (const auto& a : entities[i].aliases) {
        auto norm = normalize_alias(a);
        if (norm.empty() || !seen.insert(norm).second) continue;
        alias_index_[norm].push_back(i);
      }
    }
  }

  std::size_t embedding_dim_ = 0;
  std::unordered_map<std::string, std::vector<std::size_t>> alias_index_;
};

inline KnowledgeBase load_kb(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open kb " + path);
  try {
    return KnowledgeBase::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("kb " + path + ": " + e.what());
  }
}

/// Per span, the KB entity indices whose alias matches the span text.
using CandidateMap = std::vector<std::vector<std::size_t>>;

inline CandidateMap link_candidates(const corpus::Document& doc, const std::vector<corpus::Span>& spans,
                                    const KnowledgeBase& kb) {
  CandidateMap out(spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i) out[i] = kb.lookup(doc.span_text(spans[i]));
  return out;
}

}  // namespace keci::kb
