#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

#include "keci/eval/decode.hpp"
#include "keci/eval/metrics.hpp"
#include "keci/train/model.hpp"

namespace keci::eval {

template <typename T>
PredictedGraph decode_forward(const train::ForwardResult<T>& fwd, RelationLossMode mode) {
  return decode_graph(fwd.decode_entity_probs(), fwd.decode_relation_logits(), fwd.decode_relation_probs(),
                      fwd.initial.pairs, fwd.kept_spans(), mode);
}

template <typename T>
PredictedGraph predict_graph(const train::KeciModel<T>& model, const train::PreparedDocument& doc) {
  ad::NoGradScope<T> no_grad;
  return decode_forward(model.forward(doc), model.config().relation_loss_mode);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers; the first
/// exception is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename T>
std::vector<PredictedGraph> predict_all(const train::KeciModel<T>& model,
                                        const std::vector<train::PreparedDocument>& docs, std::size_t threads = 1) {
  std::vector<PredictedGraph> out(docs.size());
  parallel_for(docs.size(), threads, [&](std::size_t i) { out[i] = predict_graph(model, docs[i]); });
  return out;
}

inline std::vector<PredictedGraph> gold_graphs(const std::vector<train::PreparedDocument>& docs) {
  std::vector<PredictedGraph> out;
  for (const auto& d : docs) out.push_back(gold_graph(d.doc));
  return out;
}

template <typename T>
MetricsReport evaluate_model(const train::KeciModel<T>& model, const std::vector<train::PreparedDocument>& docs,
                             std::size_t threads = 1) {
  return evaluate_graphs(predict_all(model, docs, threads), gold_graphs(docs));
}

template <typename T>
std::vector<train::PreparedDocument> prepare_all(const train::KeciModel<T>& model,
                                                 const std::vector<corpus::Document>& docs,
                                                 const kb::KnowledgeBase* kb) {
  std::vector<train::PreparedDocument> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(model.prepare(d, kb));
  return out;
}

}  // namespace keci::eval
