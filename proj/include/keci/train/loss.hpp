#pragma once

#include <vector>

#include "keci/autodiff/ops.hpp"
#include "keci/fusion/fusion.hpp"
#include "keci/spangraph/spangraph.hpp"
#include "keci/train/config.hpp"
#include "keci/train/model.hpp"

namespace keci::train {

template <typename T>
struct LossReport {
  Tensor<T> l1e, l1r, l2e, l2r;
  Tensor<T> total;

  double value() const { return static_cast<double>(total.item()); }
};

/// total = (l1e + l1r) + weight * (l2e + l2r)
template <typename T>
LossReport<T> combine_losses(Tensor<T> l1e, Tensor<T> l1r, Tensor<T> l2e, Tensor<T> l2r, double weight) {
  LossReport<T> r{l1e, l1r, l2e, l2r, {}};
  r.total = ad::add(ad::add(l1e, l1r), ad::scale(ad::add(l2e, l2r), static_cast<T>(weight)));
  return r;
}

/// Relation supervision for the pairs of kept spans.
struct RelationTargets {
  std::vector<std::size_t> cls;                // per pair; 0 = no relation
  std::vector<std::vector<std::size_t>> all;  // per pair; every gold type
};

inline RelationTargets relation_targets(const PreparedDocument& doc, const std::vector<std::size_t>& kept,
                                        const std::vector<spangraph::Pair>& pairs) {
  RelationTargets t;
  for (auto [i, j] : pairs) {
    auto types = doc.relation_types(kept[i], kept[j]);
    t.cls.push_back(types.empty() ? 0 : types.front());
    t.all.push_back(std::move(types));
  }
  return t;
}

/// softmax_ce: mean CE of the softmax distributions. sigmoid_bce: BCE of
/// per-type sigmoids against multi-hot rows, where column 0 is on exactly
/// when the pair has no gold relation.
template <typename T>
Tensor<T> relation_loss(const Tensor<T>& logits, const Tensor<T>& probs, const RelationTargets& targets,
                        RelationLossMode mode) {
  if (targets.cls.empty()) return Tensor<T>::scalar(T{0});
  if (mode == RelationLossMode::kSoftmaxCe) return ad::cross_entropy(probs, targets.cls);
  const std::size_t r = logits.cols();
  std::vector<T> hot(targets.cls.size() * r, T{0});
  for (std::size_t p = 0; p < targets.all.size(); ++p) {
    if (targets.all[p].empty()) hot[p * r] = T{1};
    for (auto k : targets.all[p]) hot[p * r + k] = T{1};
  }
  return ad::binary_cross_entropy(ad::sigmoid(logits), Tensor<T>({targets.cls.size(), r}, std::move(hot)));
}

template <typename T>
Tensor<T> entity_loss(const Tensor<T>& probs, const std::vector<std::size_t>& targets) {
  if (targets.empty()) return Tensor<T>::scalar(T{0});
  return ad::cross_entropy(probs, targets);
}

/// Joint loss over the initial graph (all enumerated spans, kept pairs) and
/// the final graph (kept spans and pairs). Without a final graph its terms are 0.
template <typename T>
LossReport<T> compute_loss(const spangraph::InitialPrediction<T>& initial, const fusion::FinalPrediction<T>* final,
                           const PreparedDocument& doc, const ModelConfig& config) {
  const RelationTargets rel = relation_targets(doc, initial.kept, initial.pairs);
  Tensor<T> l1e = entity_loss(initial.entity_probs, doc.entity_targets);
  Tensor<T> l1r = relation_loss(initial.relation_logits, initial.relation_probs, rel, config.relation_loss_mode);
  Tensor<T> l2e = Tensor<T>::scalar(T{0}), l2r = Tensor<T>::scalar(T{0});
  if (final != nullptr) {
    std::vector<std::size_t> kept_targets;
    for (auto i : initial.kept) kept_targets.push_back(doc.entity_targets[i]);
    l2e = entity_loss(final->entity_probs, kept_targets);
    l2r = relation_loss(final->relation_logits, final->relation_probs, rel, config.relation_loss_mode);
  }
  return combine_losses(l1e, l1r, l2e, l2r, config.final_loss_weight);
}

template <typename T>
LossReport<T> compute_loss(const ForwardResult<T>& fwd, const PreparedDocument& doc, const ModelConfig& config) {
  return compute_loss(fwd.initial, fwd.final ? &*fwd.final : nullptr, doc, config);
}

}  // namespace keci::train
