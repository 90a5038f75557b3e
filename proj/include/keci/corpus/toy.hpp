#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "keci/corpus/dataset_io.hpp"
#include "keci/corpus/document.hpp"
#include "keci/corpus/schema.hpp"
#include "keci/error.hpp"
#include "keci/random.hpp"

namespace keci::corpus {

struct RelationRule {
  std::string head_type;
  std::string predicate;  // one or more words
  std::string tail_type;
  std::string relation;
};

/// Parameters of the synthetic corpus. Every sentence is
/// "<head mention> <predicate> <tail mention> ." with one gold relation.
///
/// A mention is ambiguous with probability `ambiguity_rate`: it gets a fresh
/// surface form that occurs nowhere else, so its type cannot be learned from
/// the text. The KB then holds one relevant entity aliased to that surface
/// form (semantic type "<Type> Class") plus `distractors_per_mention`
/// entities of distractor semantic types. With probability `generic_rate`
/// the relevant entity is typed with the shared `generic_type` instead, so
/// its type only follows from the KB edges linking it to the other mention's
/// relevant entity or from the sentence partner.
struct ToySpec {
  std::vector<std::string> entity_types{"Chemical", "Protein"};
  std::vector<RelationRule> relation_rules{{"Chemical", "binds", "Protein", "binds"}};
  std::size_t vocab_size = 6;  // unambiguous surface forms per entity type
  std::size_t num_sentences = 32;
  std::size_t num_dev = 16;
  double ambiguity_rate = 0.0;
  std::size_t distractors_per_mention = 2;
  double generic_rate = 0.0;
  std::vector<std::string> distractor_types{"Gene or Genome", "Virus", "Cell Component"};
  std::string generic_type = "Biologic Substance";
  std::size_t kb_dim = 8;
  double kb_noise = 0.1;

  static ToySpec from_json(const nlohmann::json& j) {
    ToySpec s;
    try {
      if (j.contains("entity_types")) s.entity_types = j.at("entity_types").get<std::vector<std::string>>();
      if (j.contains("relation_rules")) {
        s.relation_rules.clear();
        for (const auto& r : j.at("relation_rules")) {
          s.relation_rules.push_back({r.at("head_type").get<std::string>(), r.at("predicate").get<std::string>(),
                                      r.at("tail_type").get<std::string>(), r.at("relation").get<std::string>()});
        }
      }
      s.vocab_size = j.value("vocab_size", s.vocab_size);
      s.num_sentences = j.value("num_sentences", s.num_sentences);
      s.num_dev = j.value("num_dev", s.num_dev);
      s.ambiguity_rate = j.value("ambiguity_rate", s.ambiguity_rate);
      s.distractors_per_mention = j.value("distractors_per_mention", s.distractors_per_mention);
      s.generic_rate = j.value("generic_rate", s.generic_rate);
      if (j.contains("distractor_types"))
        s.distractor_types = j.at("distractor_types").get<std::vector<std::string>>();
      s.generic_type = j.value("generic_type", s.generic_type);
      s.kb_dim = j.value("kb_dim", s.kb_dim);
      s.kb_noise = j.value("kb_noise", s.kb_noise);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("toy spec: ") + e.what());
    }
    return s;
  }
};

inline std::string relevant_semantic_type(const std::string& entity_type) { return entity_type + " Class"; }

inline constexpr const char* kToyInteracts = "interacts_with";
inline constexpr const char* kToyInteractedBy = "interacted_by";

struct ToyCorpus {
  TaskSchema schema;
  std::vector<Document> train;
  std::vector<Document> dev;
  nlohmann::json kb;
  std::set<std::string> relevant_types;    // semantic types of relevant candidates
  std::set<std::string> distractor_types;  // semantic types only distractors carry
};

namespace detail {

class ToyBuilder {
 public:
  ToyBuilder(const ToySpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {}

  ToyCorpus build() {
    validate();
    ToyCorpus out;
    std::vector<std::string> relation_names;
    for (const auto& r : spec_.relation_rules)
      if (std::find(relation_names.begin(), relation_names.end(), r.relation) == relation_names.end())
        relation_names.push_back(r.relation);
    out.schema = TaskSchema(spec_.entity_types, relation_names);
    schema_ = &out.schema;

    for (const auto& t : spec_.entity_types) {
      auto& pool = pools_[t];
      while (pool.size() < spec_.vocab_size) pool.push_back(fresh_word(false));
    }
    semantic_types_ = {};
    for (const auto& t : spec_.entity_types) semantic_types_.push_back(relevant_semantic_type(t));
    if (spec_.generic_rate > 0) semantic_types_.push_back(spec_.generic_type);
    for (const auto& t : spec_.distractor_types) semantic_types_.push_back(t);
    for (const auto& st : semantic_types_) {
      std::vector<double> proto(spec_.kb_dim);
      for (auto& v : proto) v = rng_.normal();
      prototypes_[st] = proto;
    }

    for (std::size_t i = 0; i < spec_.num_sentences; ++i) out.train.push_back(sentence("train-" + std::to_string(i)));
    for (std::size_t i = 0; i < spec_.num_dev; ++i) out.dev.push_back(sentence("dev-" + std::to_string(i)));

    nlohmann::json type_edges = nlohmann::json::array();
    for (const auto& r : spec_.relation_rules) {
      const auto h = relevant_semantic_type(r.head_type), t = relevant_semantic_type(r.tail_type);
      type_edges.push_back({h, kToyInteracts, t});
      type_edges.push_back({t, kToyInteractedBy, h});
    }
    out.kb = {{"semantic_types", semantic_types_},
              {"kb_relations", {kToyInteracts, kToyInteractedBy}},
              {"entities", entities_},
              {"entity_edges", entity_edges_},
              {"type_edges", type_edges}};
    for (const auto& t : spec_.entity_types) out.relevant_types.insert(relevant_semantic_type(t));
    if (spec_.generic_rate > 0) out.relevant_types.insert(spec_.generic_type);
    out.distractor_types.insert(spec_.distractor_types.begin(), spec_.distractor_types.end());
    return out;
  }

 private:
  void validate() const {
    if (spec_.entity_types.empty()) throw ArgumentError("toy spec declares no entity types");
    if (spec_.relation_rules.empty()) throw ArgumentError("toy spec declares no relation rules");
    if (spec_.vocab_size == 0) throw ArgumentError("toy spec vocab_size must be positive");
    if (spec_.kb_dim == 0) throw ArgumentError("toy spec kb_dim must be positive");
    if (spec_.ambiguity_rate < 0 || spec_.ambiguity_rate > 1) throw ArgumentError("ambiguity_rate outside [0, 1]");
    if (spec_.distractors_per_mention > spec_.distractor_types.size())
      throw ArgumentError("more distractors per mention than distractor types");
    for (const auto& r : spec_.relation_rules) {
      for (const auto* t : {&r.head_type, &r.tail_type})
        if (std::find(spec_.entity_types.begin(), spec_.entity_types.end(), *t) == spec_.entity_types.end())
          throw ArgumentError("relation rule references unknown entity type " + *t);
      if (tokenize(r.predicate).empty()) throw ArgumentError("relation rule with empty predicate");
    }
  }

  std::string fresh_word(bool ambiguous) {
    static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
    static const char* kVowels[] = {"a", "e", "i", "o", "u"};
    for (;;) {
      std::string w;
      const std::size_t syllables = 2 + rng_.below(2);
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng_.below(std::size(kOnsets))];
        w += kVowels[rng_.below(std::size(kVowels))];
      }
      w += std::to_string(rng_.below(10));
      if (ambiguous) w += std::to_string(rng_.below(10));
      if (used_words_.insert(w).second) return w;
    }
  }

  std::string next_id() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "C%07zu", ++entity_counter_);
    return buf;
  }

  nlohmann::json kb_entity(const std::string& id, const std::string& alias, const std::string& semantic_type) {
    std::vector<double> emb = prototypes_.at(semantic_type);
    for (auto& v : emb) v += spec_.kb_noise * rng_.normal();
    for (auto& v : emb) v = std::round(v * 1e6) / 1e6;
    std::string definition;
    for (char c : semantic_type) definition += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    definition += " concept";
    return {{"id", id},
            {"aliases", {alias}},
            {"definition", definition},
            {"semantic_types", {semantic_type}},
            {"embedding", emb}};
  }

  struct Mention {
    std::string surface;
    std::string relevant_id;  // empty when not ambiguous
  };

  Mention mention(const std::string& type) {
    Mention m;
    if (!rng_.bernoulli(spec_.ambiguity_rate)) {
      const auto& pool = pools_.at(type);
      m.surface = pool[rng_.below(pool.size())];
      return m;
    }
    m.surface = fresh_word(true);
    const bool generic = rng_.bernoulli(spec_.generic_rate);
    std::vector<std::string> distractors = spec_.distractor_types;
    rng_.shuffle(distractors);
    distractors.resize(spec_.distractors_per_mention);
    std::vector<std::string> types{generic ? spec_.generic_type : relevant_semantic_type(type)};
    types.insert(types.end(), distractors.begin(), distractors.end());
    // Ids are assigned in shuffled order so they carry no relevance signal.
    std::vector<std::size_t> order(types.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng_.shuffle(order);
    std::vector<std::string> ids(types.size());
    for (auto i : order) ids[i] = next_id();
    for (std::size_t i = 0; i < types.size(); ++i) entities_.push_back(kb_entity(ids[i], m.surface, types[i]));
    m.relevant_id = ids[0];
    return m;
  }

  Document sentence(const std::string& id) {
    const auto& rule = spec_.relation_rules[rng_.below(spec_.relation_rules.size())];
    const Mention head = mention(rule.head_type);
    const Mention tail = mention(rule.tail_type);
    Document doc;
    doc.id = id;
    doc.text = head.surface + " " + rule.predicate + " " + tail.surface + " .";
    doc.tokens = tokenize(doc.text);
    const std::size_t pred_len = tokenize(rule.predicate).size();
    const std::size_t tail_start = 1 + pred_len;
    doc.entities.push_back({{0, 1}, *schema_->entity_index(rule.head_type)});
    doc.entities.push_back({{tail_start, tail_start + 1}, *schema_->entity_index(rule.tail_type)});
    doc.relations.push_back({0, 1, *schema_->relation_index(rule.relation)});
    if (!head.relevant_id.empty() && !tail.relevant_id.empty()) {
      entity_edges_.push_back({head.relevant_id, kToyInteracts, tail.relevant_id});
      entity_edges_.push_back({tail.relevant_id, kToyInteractedBy, head.relevant_id});
    }
    return doc;
  }

  const ToySpec& spec_;
  Rng rng_;
  const TaskSchema* schema_ = nullptr;
  std::map<std::string, std::vector<std::string>> pools_;
  std::set<std::string> used_words_;
  std::vector<std::string> semantic_types_;
  std::map<std::string, std::vector<double>> prototypes_;
  nlohmann::json entities_ = nlohmann::json::array();
  nlohmann::json entity_edges_ = nlohmann::json::array();
  std::size_t entity_counter_ = 0;
};

}  // namespace detail

/// Deterministic synthetic corpus and matching KB for `seed`.
inline ToyCorpus generate_toy(const ToySpec& spec, std::uint64_t seed) {
  return detail::ToyBuilder(spec, seed).build();
}

/// Writes train.jsonl, dev.jsonl, kb.json and schema.json into `dir`.
inline void write_toy(const ToyCorpus& toy, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_dataset((dir / "train.jsonl").string(), toy.train, toy.schema);
  save_dataset((dir / "dev.jsonl").string(), toy.dev, toy.schema);
  std::ofstream kb(dir / "kb.json", std::ios::binary);
  kb << toy.kb.dump(1) << '\n';
  std::ofstream schema(dir / "schema.json", std::ios::binary);
  schema << toy.schema.to_json().dump(1) << '\n';
}

}  // namespace keci::corpus
