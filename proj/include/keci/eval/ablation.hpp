#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "keci/eval/metrics.hpp"
#include "keci/eval/predict.hpp"
#include "keci/train/trainer.hpp"

namespace keci::eval {

struct AblationRow {
  train::Variant variant;
  MetricsReport metrics;
  std::size_t best_epoch = 0;
};

/// Trains each variant with the same config and seed on `train`, then scores
/// it on `test`.
inline std::vector<AblationRow> run_ablation(const std::vector<train::Variant>& variants, const ModelConfig& config,
                                             const corpus::TaskSchema& schema,
                                             const std::vector<corpus::Document>& train,
                                             const std::vector<corpus::Document>& dev,
                                             const std::vector<corpus::Document>& test, const kb::KnowledgeBase* kb,
                                             const train::FitOptions& base = {}) {
  std::vector<AblationRow> rows;
  for (auto v : variants) {
    train::FitOptions opts = base;
    opts.variant = v;
    const auto fitted = train::fit<float>(config, schema, train, dev, kb, opts);
    const auto docs = prepare_all(fitted.model, test, kb);
    rows.push_back({v, evaluate_model(fitted.model, docs, opts.threads), fitted.best_epoch});
  }
  return rows;
}

inline nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& r : rows) out[train::to_string(r.variant)] = r.metrics.to_json();
  return out;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "variant             ent-micro  ent-macro  rel-micro  rel-macro\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-19s %-10.4f %-10.4f %-10.4f %.4f\n", train::to_string(r.variant).c_str(),
                  r.metrics.entity_micro.f1, r.metrics.entity_macro.f1, r.metrics.relation_micro.f1,
                  r.metrics.relation_macro.f1);
    out += buf;
  }
  return out;
}

}  // namespace keci::eval
