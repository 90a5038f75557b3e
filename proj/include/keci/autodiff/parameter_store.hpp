#pragma once

#include <map>
#include <string>
#include <vector>

#include "keci/autodiff/tensor.hpp"

namespace keci::ad {

/// Named trainable tensors. Iteration is sorted by name.
template <typename T>
class ParameterStore {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  Tensor<T>& add(const std::string& name, Tensor<T> value) {
    auto [it, inserted] = params_.emplace(name, std::move(value));
    if (!inserted) throw ContractError("duplicate parameter name: " + name);
    if (!it->second.requires_grad()) it->second.set_requires_grad(true);
    return it->second;
  }

  const Tensor<T>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
  }
  Tensor<T>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.size();
    return n;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
  }

  void zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Independent copy of the values (and trainability flags), without grads.
  ParameterStore clone() const {
    ParameterStore out;
    for (const auto& [name, t] : params_) out.params_.emplace(name, t.clone());
    for (auto& [name, t] : out.params_) t.zero_grad();
    return out;
  }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, t] : params_) {
      auto c = t.template cast<U>();
      const bool rg = t.requires_grad();
      out.add(name, c).set_requires_grad(rg);
    }
    return out;
  }

  /// Copies values from `other` (same names and shapes) into this store's
  /// existing tensors, keeping handles held elsewhere valid.
  void assign_values(const ParameterStore& other) {
    for (auto& [name, t] : params_) {
      const auto& src = other.get(name);
      if (src.shape() != t.shape()) throw DimensionError("assign_values shape mismatch for " + name);
      std::copy(src.values().begin(), src.values().end(), t.mutable_values().begin());
    }
  }

 private:
  Map params_;
};

}  // namespace keci::ad
