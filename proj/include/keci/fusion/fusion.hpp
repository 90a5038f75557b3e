#pragma once

#include <string>
#include <vector>

#include "keci/autodiff/ops.hpp"
#include "keci/nn/layers.hpp"
#include "keci/spangraph/spangraph.hpp"
#include "keci/train/config.hpp"

namespace keci::fusion {

using ad::Tensor;

/// Attention over {sentinel} + candidates for every kept span.
///
/// Scores and weights are flat: entries 0..m-1 are the sentinels, candidate
/// entries follow span by span. `groups[i]` lists span i's entries with the
/// sentinel first; `candidates[i]` lists the matching KG node indices.
template <typename T>
struct FusionState {
  Tensor<T> sentinel;  // c [m x d]
  Tensor<T> scores;    // alpha [K x 1]
  Tensor<T> weights;   // beta [K x 1]
  Tensor<T> fused;     // f [m x d]
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::vector<std::size_t>> candidates;

  std::size_t num_spans() const { return groups.size(); }
  T sentinel_weight(std::size_t i) const { return weights[groups.at(i).front()]; }
  T candidate_weight(std::size_t i, std::size_t c) const { return weights[groups.at(i).at(c + 1)]; }
  T sentinel_score(std::size_t i) const { return scores[groups.at(i).front()]; }
  T candidate_score(std::size_t i, std::size_t c) const { return scores[groups.at(i).at(c + 1)]; }
};

template <typename T>
class Fusion {
 public:
  Fusion() = default;

  Fusion(ad::ParameterStore<T>& store, const ModelConfig& config, Rng& rng) {
    ffnn_c_ = nn::Mlp<T>::create(store, "fusion.ffnn_c", 2 * config.d, config.hidden(), 1, rng);
    ffnn_s_ = nn::Linear<T>::create(store, "fusion.ffnn_s", config.d, config.d, rng);
  }

  /// alpha = FFNN_c([h, n]) per row pair, shape [k x 1].
  Tensor<T> score(const Tensor<T>& h, const Tensor<T>& n) const { return ffnn_c_(ad::concat<T>({h, n}, 1)); }

  /// Sentinel vectors c = FFNN_s(h).
  Tensor<T> sentinel(const Tensor<T>& h) const { return ffnn_s_(h); }

  /// f_i = beta_i c_i + sum_j beta_ij n_j, with beta a softmax over the
  /// sentinel score and the candidate scores of span i.
  FusionState<T> fuse(const Tensor<T>& h, const Tensor<T>& nodes,
                      const std::vector<std::vector<std::size_t>>& candidates) const {
    const std::size_t m = h.rows();
    if (candidates.size() != m) throw DimensionError("candidate lists do not match span count");
    FusionState<T> st;
    st.candidates = candidates;
    st.sentinel = sentinel(h);
    std::vector<std::size_t> span_rows, node_rows;
    for (std::size_t i = 0; i < m; ++i) {
      st.groups.push_back({i});
      for (auto j : candidates[i]) {
        if (j >= nodes.rows()) throw IndexError("candidate node " + std::to_string(j) + " out of range");
        st.groups[i].push_back(m + node_rows.size());
        span_rows.push_back(i);
        node_rows.push_back(j);
      }
    }
    const Tensor<T> sentinel_scores = score(h, st.sentinel);
    Tensor<T> values = st.sentinel;
    st.scores = sentinel_scores;
    if (!node_rows.empty()) {
      const Tensor<T> cand = ad::gather_rows(nodes, node_rows);
      st.scores = ad::concat<T>({sentinel_scores, score(ad::gather_rows(h, span_rows), cand)}, 0);
      values = ad::concat<T>({st.sentinel, cand}, 0);
    }
    st.weights = ad::grouped_softmax(st.scores, st.groups);
    const std::size_t k = st.scores.rows();
    std::vector<std::size_t> positions(k);
    for (std::size_t i = 0; i < m; ++i)
      for (auto idx : st.groups[i]) positions[idx] = i * k + idx;
    st.fused = ad::matmul(ad::scatter(st.weights, positions, {m, k}), values);
    return st;
  }

 private:
  nn::Mlp<T> ffnn_c_;
  nn::Linear<T> ffnn_s_;
};

/// Final span graph: entity distributions per kept span and relation
/// distributions per ordered kept pair.
template <typename T>
struct FinalPrediction {
  Tensor<T> entity_probs;     // e-hat [m x |E|]
  Tensor<T> relation_logits;  // [P x |R|]
  Tensor<T> relation_probs;   // r-hat [P x |R|]
};

/// Classifiers over fused representations, separate from the initial ones.
template <typename T>
class FinalClassifier {
 public:
  FinalClassifier() = default;

  FinalClassifier(ad::ParameterStore<T>& store, const ModelConfig& config, std::size_t num_entity_types,
                  std::size_t num_relation_types, Rng& rng)
      : entity_(spangraph::EntityClassifier<T>::create(store, "fusion.ffnn_e_hat", config.d, num_entity_types, rng)),
        relation_(spangraph::RelationClassifier<T>::create(store, "fusion.ffnn_r_hat", config.d, config.hidden(),
                                                           num_relation_types, rng)) {}

  FinalPrediction<T> operator()(const Tensor<T>& fused, const std::vector<spangraph::Pair>& pairs) const {
    FinalPrediction<T> out;
    out.entity_probs = entity_(fused);
    out.relation_logits = relation_.logits(fused, pairs);
    out.relation_probs = ad::softmax(out.relation_logits, 1);
    return out;
  }

 private:
  spangraph::EntityClassifier<T> entity_;
  spangraph::RelationClassifier<T> relation_;
};

}  // namespace keci::fusion
