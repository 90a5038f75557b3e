#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "keci/autodiff/parameter_store.hpp"
#include "keci/autodiff/tape.hpp"

namespace keci::ad {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // Denominator floor: |analytic - numeric| / max(|numeric|, floor).
  double floor = 1e-4;
};

template <typename T>
using GradientMap = std::map<std::string, std::vector<T>>;

/// Runs f once under a fresh tape and returns d f / d param for every
/// parameter in the store. Existing grads are cleared first.
template <typename T>
GradientMap<T> analytic_gradients(const std::function<Tensor<T>()>& f, ParameterStore<T>& store) {
  store.zero_grad();
  Tape<T> tape;
  {
    TapeScope<T> scope(tape);
    Tensor<T> loss = f();
    tape.backward(loss);
  }
  GradientMap<T> out;
  for (auto& [name, t] : store) {
    if (t.has_grad()) {
      out[name] = std::vector<T>(t.grad().begin(), t.grad().end());
    } else {
      out[name] = std::vector<T>(t.size(), T{0});
    }
  }
  store.zero_grad();
  return out;
}

/// Compares `analytic` against central differences of f, perturbing every
/// scalar of every parameter in place (values are restored).
template <typename T>
GradCheckResult compare_with_finite_differences(const std::function<Tensor<T>()>& f,
                                                ParameterStore<T>& store,
                                                const GradientMap<T>& analytic,
                                                GradCheckOptions options = {}) {
  NoGradScope<T> no_grad;
  GradCheckResult result;
  const T eps = static_cast<T>(options.eps);
  for (auto& [name, t] : store) {
    if (!t.requires_grad()) continue;
    const auto& a = analytic.at(name);
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T original = values[i];
      values[i] = original + eps;
      const double up = static_cast<double>(f().item());
      values[i] = original - eps;
      const double down = static_cast<double>(f().item());
      values[i] = original;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double an = static_cast<double>(a[i]);
      const double err = std::abs(an - numeric) / std::max(std::abs(numeric), options.floor);
      ++result.checked;
      if (result.checked == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = name;
        result.worst_index = i;
        result.analytic = an;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

/// Worst relative error between backprop and central differences over all
/// parameters of `store`.
template <typename T>
GradCheckResult finite_difference_check(const std::function<Tensor<T>()>& f, ParameterStore<T>& store,
                                        GradCheckOptions options = {}) {
  const auto analytic = analytic_gradients(f, store);
  return compare_with_finite_differences(f, store, analytic, options);
}

}  // namespace keci::ad
