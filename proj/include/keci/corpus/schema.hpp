#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "keci/error.hpp"

namespace keci::corpus {

inline constexpr const char* kNonEntity = "O";
inline constexpr const char* kNonRelation = "NO_REL";

/// Entity and relation label sets. Index 0 of each is the reserved null label.
class TaskSchema {
 public:
  TaskSchema() = default;

  /// `entity_types` and `relation_types` exclude the reserved names, which
  /// are prepended here.
  TaskSchema(const std::vector<std::string>& entity_types, const std::vector<std::string>& relation_types) {
    entity_types_.push_back(kNonEntity);
    relation_types_.push_back(kNonRelation);
    append_unique(entity_types_, entity_types, kNonEntity, "entity");
    append_unique(relation_types_, relation_types, kNonRelation, "relation");
    if (entity_types_.size() < 2) throw ValidationError("schema needs at least one entity type");
    if (relation_types_.size() < 2) throw ValidationError("schema needs at least one relation type");
  }

  static TaskSchema from_json(const nlohmann::json& j) {
    try {
      return TaskSchema(j.at("entity_types").get<std::vector<std::string>>(),
                        j.at("relation_types").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("schema: ") + e.what());
    }
  }

  nlohmann::json to_json() const {
    return {{"entity_types", std::vector<std::string>(entity_types_.begin() + 1, entity_types_.end())},
            {"relation_types", std::vector<std::string>(relation_types_.begin() + 1, relation_types_.end())}};
  }

  const std::vector<std::string>& entity_types() const { return entity_types_; }
  const std::vector<std::string>& relation_types() const { return relation_types_; }
  std::size_t num_entity_types() const { return entity_types_.size(); }
  std::size_t num_relation_types() const { return relation_types_.size(); }

  std::optional<std::size_t> entity_index(const std::string& name) const { return find(entity_types_, name); }
  std::optional<std::size_t> relation_index(const std::string& name) const {
    return find(relation_types_, name);
  }

  bool operator==(const TaskSchema&) const = default;

 private:
  static void append_unique(std::vector<std::string>& out, const std::vector<std::string>& names,
                            const char* reserved, const char* what) {
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (n == reserved) {
        throw ValidationError(std::string("reserved ") + what + " type '" + reserved +
                              "' must not appear in the schema file");
      }
      if (!seen.insert(n).second) throw ValidationError(std::string("duplicate ") + what + " type: " + n);
      out.push_back(n);
    }
  }

  static std::optional<std::size_t> find(const std::vector<std::string>& v, const std::string& name) {
    auto it = std::find(v.begin(), v.end(), name);
    if (it == v.end()) return std::nullopt;
    return static_cast<std::size_t>(it - v.begin());
  }

  std::vector<std::string> entity_types_;
  std::vector<std::string> relation_types_;
};

}  // namespace keci::corpus
