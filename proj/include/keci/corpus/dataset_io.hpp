#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "keci/corpus/document.hpp"
#include "keci/corpus/schema.hpp"
#include "keci/error.hpp"

namespace keci::corpus {

/// Builds a Document from one dataset object; type names are resolved
/// against `schema`.
inline Document document_from_json(const nlohmann::json& j, const TaskSchema& schema) {
  Document doc;
  try {
    doc.id = j.at("id").get<std::string>();
    doc.text = j.at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("document: ") + e.what());
  }
  doc.tokens = tokenize(doc.text);
  const std::size_t n = doc.tokens.size();
  try {
    for (const auto& e : j.value("entities", nlohmann::json::array())) {
      const auto start = e.at("start").get<long long>();
      const auto end = e.at("end").get<long long>();
      const auto type = e.at("type").get<std::string>();
      if (start < 0 || end <= start || static_cast<std::size_t>(end) > n) {
        throw ValidationError("document " + doc.id + ": entity span [" + std::to_string(start) + ", " +
                              std::to_string(end) + ") out of range for " + std::to_string(n) + " tokens");
      }
      auto idx = schema.entity_index(type);
      if (!idx || *idx == 0) throw ValidationError("document " + doc.id + ": unknown entity type " + type);
      doc.entities.push_back({{static_cast<std::size_t>(start), static_cast<std::size_t>(end)}, *idx});
    }
    for (const auto& r : j.value("relations", nlohmann::json::array())) {
      const auto head = r.at("head").get<long long>();
      const auto tail = r.at("tail").get<long long>();
      const auto type = r.at("type").get<std::string>();
      const auto count = static_cast<long long>(doc.entities.size());
      if (head < 0 || tail < 0 || head >= count || tail >= count || head == tail) {
        throw ValidationError("document " + doc.id + ": relation endpoints (" + std::to_string(head) +
                              ", " + std::to_string(tail) + ") invalid");
      }
      auto idx = schema.relation_index(type);
      if (!idx || *idx == 0) throw ValidationError("document " + doc.id + ": unknown relation type " + type);
      doc.relations.push_back({static_cast<std::size_t>(head), static_cast<std::size_t>(tail), *idx});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("document " + doc.id + ": " + e.what());
  }
  return doc;
}

inline nlohmann::json document_to_json(const Document& doc, const TaskSchema& schema) {
  nlohmann::json entities = nlohmann::json::array();
  for (const auto& e : doc.entities) {
    entities.push_back({{"start", e.span.start}, {"end", e.span.end}, {"type", schema.entity_types().at(e.type)}});
  }
  nlohmann::json relations = nlohmann::json::array();
  for (const auto& r : doc.relations) {
    relations.push_back({{"head", r.head}, {"tail", r.tail}, {"type", schema.relation_types().at(r.type)}});
  }
  return {{"id", doc.id}, {"text", doc.text}, {"entities", entities}, {"relations", relations}};
}

inline std::vector<Document> parse_dataset(std::istream& in, const TaskSchema& schema) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      docs.push_back(document_from_json(j, schema));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

inline std::vector<Document> load_dataset(const std::string& path, const TaskSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open dataset " + path);
  return parse_dataset(in, schema);
}

inline void write_dataset(std::ostream& out, const std::vector<Document>& docs, const TaskSchema& schema) {
  for (const auto& d : docs) out << document_to_json(d, schema).dump() << '\n';
}

inline void save_dataset(const std::string& path, const std::vector<Document>& docs, const TaskSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write dataset " + path);
  write_dataset(out, docs, schema);
}

inline TaskSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open schema " + path);
  try {
    return TaskSchema::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("schema " + path + ": " + e.what());
  }
}

}  // namespace keci::corpus
