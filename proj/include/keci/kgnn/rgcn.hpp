#pragma once

#include <set>
#include <string>
#include <vector>

#include "keci/autodiff/ops.hpp"
#include "keci/kb/graph.hpp"
#include "keci/nn/layers.hpp"

namespace keci::kgnn {

using ad::Tensor;

/// Row-normalized in-adjacency per relation: A_k[i][j] = 1/|N_i^k| when
/// node j points at node i under relation k. Relations without edges are
/// reported as empty tensors so callers can skip them.
template <typename T>
std::vector<Tensor<T>> normalized_adjacency(const kb::KnowledgeGraph& kg, std::size_t num_relations) {
  const std::size_t n = kg.size();
  std::vector<std::vector<std::set<std::size_t>>> in(num_relations, std::vector<std::set<std::size_t>>(n));
  for (const auto& e : kg.edges) {
    if (e.relation >= num_relations) throw IndexError("kg edge relation " + std::to_string(e.relation) + " out of range");
    in[e.relation][e.dst].insert(e.src);
  }
  std::vector<Tensor<T>> out(num_relations);
  for (std::size_t k = 0; k < num_relations; ++k) {
    std::vector<T> a(n * n, T{0});
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (auto j : in[k][i]) a[i * n + j] = T{1} / static_cast<T>(in[k][i].size());
      any = any || !in[k][i].empty();
    }
    if (any) out[k] = Tensor<T>({n, n}, std::move(a));
  }
  return out;
}

/// v^{l+1}_i = ReLU(U v^l_i + sum_k sum_{j in N_i^k} U_k v^l_j / |N_i^k|).
template <typename T>
class Rgcn {
 public:
  Rgcn() = default;

  Rgcn(ad::ParameterStore<T>& store, std::size_t dim, std::size_t num_relations, std::size_t layers, Rng& rng)
      : num_relations_(num_relations) {
    for (std::size_t l = 0; l < layers; ++l) {
      Layer layer;
      const std::string p = "kgnn.rgcn." + std::to_string(l);
      layer.self = store.add(p + ".self", nn::xavier<T>(dim, dim, rng));
      for (std::size_t k = 0; k < num_relations; ++k)
        layer.rel.push_back(store.add(p + ".rel." + std::to_string(k), nn::xavier<T>(dim, dim, rng)));
      layers_.push_back(std::move(layer));
    }
  }

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_relations() const { return num_relations_; }

  Tensor<T> forward(const kb::KnowledgeGraph& kg, const Tensor<T>& v0) const {
    if (v0.rows() != kg.size()) throw DimensionError("node features have " + std::to_string(v0.rows()) +
                                                     " rows for " + std::to_string(kg.size()) + " nodes");
    if (kg.empty() || layers_.empty()) return v0;
    const auto adjacency = normalized_adjacency<T>(kg, num_relations_);
    Tensor<T> v = v0;
    for (const auto& layer : layers_) {
      Tensor<T> acc = ad::matmul(v, layer.self);
      for (std::size_t k = 0; k < num_relations_; ++k) {
        if (adjacency[k].rank() != 2) continue;
        acc = ad::add(acc, ad::matmul(adjacency[k], ad::matmul(v, layer.rel[k])));
      }
      v = ad::relu(acc);
    }
    return v;
  }

 private:
  struct Layer {
    Tensor<T> self;
    std::vector<Tensor<T>> rel;
  };

  std::size_t num_relations_ = 0;
  std::vector<Layer> layers_;
};

/// n_i = W v_i + b, mapping node states to the span dimension.
template <typename T>
struct NodeProjection {
  nn::Linear<T> linear;

  static NodeProjection create(ad::ParameterStore<T>& store, std::size_t node_dim, std::size_t d, Rng& rng) {
    return {nn::Linear<T>::create(store, "kgnn.proj", node_dim, d, rng)};
  }

  Tensor<T> operator()(const Tensor<T>& v) const {
    if (v.rows() == 0) return Tensor<T>::zeros({0, linear.out_dim()});
    return linear(v);
  }
};

}  // namespace keci::kgnn
