#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "keci/autodiff/ops.hpp"
#include "keci/nn/layers.hpp"
#include "keci/train/config.hpp"

namespace keci::spangraph {

using ad::Tensor;
using Pair = std::pair<std::size_t, std::size_t>;

/// Every ordered pair (i, j), i != j, of m nodes in row-major order.
inline std::vector<Pair> ordered_pairs(std::size_t m) {
  std::vector<Pair> out;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) out.emplace_back(i, j);
  return out;
}

/// [x_i, x_j, x_i * x_j] per pair, shape [P x 3d].
template <typename T>
Tensor<T> pair_features(const Tensor<T>& x, const std::vector<Pair>& pairs) {
  std::vector<std::size_t> heads, tails;
  for (auto [i, j] : pairs) {
    heads.push_back(i);
    tails.push_back(j);
  }
  const Tensor<T> h = ad::gather_rows(x, heads);
  const Tensor<T> t = ad::gather_rows(x, tails);
  return ad::concat<T>({h, t, ad::mul(h, t)}, 1);
}

/// Span-pruning budget ceil(ratio * n).
inline std::size_t prune_budget(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
}

/// Keeps up to ceil(ratio * n) spans with the lowest non-entity probability.
/// Ties go to the earlier span; the result is in span order.
inline std::vector<std::size_t> prune_spans(const std::vector<double>& non_entity, double ratio, std::size_t n) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ContractError("prune ratio must be in (0, 1]");
  std::vector<std::size_t> order(non_entity.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return non_entity[a] < non_entity[b]; });
  order.resize(std::min(prune_budget(ratio, n), order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

template <typename T>
std::vector<std::size_t> prune_spans(const Tensor<T>& entity_probs, double ratio, std::size_t n) {
  std::vector<double> scores(entity_probs.rows());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = static_cast<double>(entity_probs.at(i, 0));
  return prune_spans(scores, ratio, n);
}

/// Softmax(W x + b) over entity types.
template <typename T>
struct EntityClassifier {
  nn::Linear<T> linear;

  static EntityClassifier create(ad::ParameterStore<T>& store, const std::string& prefix, std::size_t d,
                                 std::size_t num_types, Rng& rng) {
    return {nn::Linear<T>::create(store, prefix, d, num_types, rng)};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return ad::softmax(linear(x), 1); }
};

/// Logits of FFNN([x_i, x_j, x_i * x_j]) over relation types, per pair.
template <typename T>
struct RelationClassifier {
  nn::Mlp<T> mlp;

  static RelationClassifier create(ad::ParameterStore<T>& store, const std::string& prefix, std::size_t d,
                                   std::size_t hidden, std::size_t num_types, Rng& rng) {
    return {nn::Mlp<T>::create(store, prefix, 3 * d, hidden, num_types, rng)};
  }

  std::size_t num_types() const { return mlp.output.out_dim(); }

  Tensor<T> logits(const Tensor<T>& x, const std::vector<Pair>& pairs) const {
    if (pairs.empty()) return Tensor<T>::zeros({0, num_types()});
    return mlp(pair_features(x, pairs));
  }
};

struct InitialPredictionShape {
  std::size_t num_spans;
  std::size_t num_kept;
};

/// Initial span graph: entity distributions for every enumerated span,
/// the kept nodes, and relation distributions for ordered kept pairs.
template <typename T>
struct InitialPrediction {
  Tensor<T> entity_probs;           // e [m_all x |E|]
  std::vector<std::size_t> kept;    // indices into the enumerated spans
  std::vector<Pair> pairs;          // positions within `kept`
  Tensor<T> relation_logits;        // [P x |R|]
  Tensor<T> relation_probs;         // r [P x |R|]

  /// r_ij for kept positions i != j.
  std::vector<T> relation(std::size_t i, std::size_t j) const {
    const std::size_t m = kept.size();
    const std::size_t p = i * (m - 1) + (j < i ? j : j - 1);
    const std::size_t r = relation_probs.cols();
    return {relation_probs.values().begin() + p * r, relation_probs.values().begin() + (p + 1) * r};
  }
};

/// Bidirectional relation-weighted GCN with a residual update per layer.
template <typename T>
class BiGcn {
 public:
  BiGcn() = default;

  BiGcn(ad::ParameterStore<T>& store, const ModelConfig& config, std::size_t num_relations, Rng& rng)
      : num_relations_(num_relations), detach_edges_(config.detach_edge_weights) {
    const std::size_t d = config.d;
    for (std::size_t l = 0; l < config.gcn_layers; ++l) {
      Layer layer;
      const std::string p = "spangraph.gcn." + std::to_string(l);
      for (const char* dir : {"fwd", "bwd"}) {
        Direction& dr = std::string(dir) == "fwd" ? layer.fwd : layer.bwd;
        const std::string q = p + "." + dir;
        if (config.gcn_num_bases > 0) {
          dr.basis = store.add(q + ".basis", nn::xavier<T>(config.gcn_num_bases, d * d, rng));
          dr.coef = store.add(q + ".coef", nn::xavier<T>(num_relations, config.gcn_num_bases, rng));
        }
        for (std::size_t k = 0; k < num_relations; ++k) {
          const std::string r = q + "." + std::to_string(k);
          if (config.gcn_num_bases == 0) dr.weights.push_back(store.add(r + ".weight", nn::xavier<T>(d, d, rng)));
          dr.biases.push_back(store.add(r + ".bias", Tensor<T>::zeros({d}, true)));
        }
      }
      layer.ffnn_a = nn::Linear<T>::create(store, p + ".ffnn_a", 2 * d, d, rng);
      layers_.push_back(std::move(layer));
    }
  }

  std::size_t num_layers() const { return layers_.size(); }

  /// h^0 = s; h^{l+1} = h^l + FFNN_a(ReLU([fwd messages, bwd messages])).
  Tensor<T> forward(const Tensor<T>& s, const Tensor<T>& relation_probs, const std::vector<Pair>& pairs) const {
    const std::size_t m = s.rows();
    const Tensor<T> r = detach_edges_ ? ad::detach(relation_probs) : relation_probs;
    std::vector<std::size_t> positions;
    for (auto [i, j] : pairs) positions.push_back(i * m + j);
    std::vector<Tensor<T>> adjacency;  // A_k[i][j] = r_ij[k]
    for (std::size_t k = 0; k < num_relations_; ++k) {
      adjacency.push_back(pairs.empty() ? Tensor<T>::zeros({m, m}) : ad::scatter(ad::column(r, k), positions, {m, m}));
    }
    Tensor<T> h = s;
    for (const auto& layer : layers_) {
      Tensor<T> fwd, bwd;
      const auto fwd_w = layer.fwd.resolve(num_relations_, s.cols());
      const auto bwd_w = layer.bwd.resolve(num_relations_, s.cols());
      for (std::size_t k = 0; k < num_relations_; ++k) {
        const Tensor<T> out_msg = ad::matmul(adjacency[k], ad::add_bias(ad::matmul(h, fwd_w[k]), layer.fwd.biases[k]));
        const Tensor<T> in_msg =
            ad::matmul(ad::transpose(adjacency[k]), ad::add_bias(ad::matmul(h, bwd_w[k]), layer.bwd.biases[k]));
        fwd = k == 0 ? out_msg : ad::add(fwd, out_msg);
        bwd = k == 0 ? in_msg : ad::add(bwd, in_msg);
      }
      h = ad::add(h, layer.ffnn_a(ad::relu(ad::concat<T>({fwd, bwd}, 1))));
    }
    return h;
  }

 private:
  struct Direction {
    std::vector<Tensor<T>> weights;
    std::vector<Tensor<T>> biases;
    Tensor<T> basis;  // [B x d*d], basis mode only
    Tensor<T> coef;   // [|R| x B]

    std::vector<Tensor<T>> resolve(std::size_t num_relations, std::size_t d) const {
      if (!weights.empty()) return weights;
      const Tensor<T> all = ad::matmul(coef, basis);  // [|R| x d*d]
      std::vector<Tensor<T>> out;
      for (std::size_t k = 0; k < num_relations; ++k) out.push_back(ad::reshape(ad::gather_rows(all, {k}), {d, d}));
      return out;
    }
  };
  struct Layer {
    Direction fwd, bwd;
    nn::Linear<T> ffnn_a;
  };

  std::size_t num_relations_ = 0;
  bool detach_edges_ = false;
  std::vector<Layer> layers_;
};

}  // namespace keci::spangraph
