#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "keci/autodiff/parameter_store.hpp"

namespace keci::train {

/// Embedding tables train with the lower learning rate.
inline bool is_lower_group(const std::string& name) {
  const std::string suffix = ".table";
  return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Adam with two learning-rate groups.
template <typename T>
class Adam {
 public:
  Adam(double lr_lower, double lr_upper, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_lower_(lr_lower), lr_upper_(lr_upper), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  std::size_t step_count() const { return t_; }
  std::size_t missing_grads() const { return missing_; }

  /// One update from the gradients held by the store's tensors. Parameters
  /// without a gradient buffer are skipped and counted.
  void step(ad::ParameterStore<T>& store) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : store) {
      if (!p.requires_grad()) continue;
      if (!p.has_grad()) {
        ++missing_;
        continue;
      }
      auto& st = state_[name];
      if (st.m.empty()) {
        st.m.assign(p.size(), 0.0);
        st.v.assign(p.size(), 0.0);
      }
      const double lr = is_lower_group(name) ? lr_lower_ : lr_upper_;
      auto values = p.mutable_values();
      const auto grad = p.grad();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
        st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = st.m[i] / c1, vhat = st.v[i] / c2;
        values[i] = static_cast<T>(static_cast<double>(values[i]) - lr * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

 private:
  struct Moments {
    std::vector<double> m, v;
  };

  double lr_lower_, lr_upper_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::size_t missing_ = 0;
  std::map<std::string, Moments> state_;
};

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ad::ParameterStore<T>& store, double max_norm) {
  double sq = 0.0;
  for (auto& [_, p] : store)
    if (p.has_grad())
      for (auto g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& [_, p] : store)
      if (p.has_grad())
        for (auto& g : p.mutable_grad()) g *= f;
  }
  return norm;
}

}  // namespace keci::train
