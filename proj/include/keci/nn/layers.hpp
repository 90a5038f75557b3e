#pragma once

#include <cmath>
#include <string>

#include "keci/autodiff/ops.hpp"
#include "keci/autodiff/parameter_store.hpp"
#include "keci/random.hpp"

namespace keci::nn {

using ad::ParameterStore;
using ad::Tensor;

/// Xavier-uniform matrix of shape [in x out].
template <typename T>
Tensor<T> xavier(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<T> values(in * out);
  for (auto& v : values) v = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>({in, out}, std::move(values), true);
}

template <typename T>
Tensor<T> gaussian(ad::Shape shape, double stddev, Rng& rng) {
  std::vector<T> values(ad::numel(shape));
  for (auto& v : values) v = static_cast<T>(stddev * rng.normal());
  return Tensor<T>(std::move(shape), std::move(values), true);
}

/// y = x W + b with W stored as [in x out].
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  static Linear create(ParameterStore<T>& store, const std::string& prefix, std::size_t in,
                       std::size_t out, Rng& rng) {
    Linear l;
    l.weight = store.add(prefix + ".weight", xavier<T>(in, out, rng));
    l.bias = store.add(prefix + ".bias", Tensor<T>::zeros({out}, true));
    return l;
  }

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  Tensor<T> operator()(const Tensor<T>& x) const { return ad::add_bias(ad::matmul(x, weight), bias); }
};

/// One hidden ReLU layer: out(relu(hidden(x))).
template <typename T>
struct Mlp {
  Linear<T> hidden;
  Linear<T> output;

  static Mlp create(ParameterStore<T>& store, const std::string& prefix, std::size_t in,
                    std::size_t width, std::size_t out, Rng& rng) {
    Mlp m;
    m.hidden = Linear<T>::create(store, prefix + ".0", in, width, rng);
    m.output = Linear<T>::create(store, prefix + ".1", width, out, rng);
    return m;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return output(ad::relu(hidden(x))); }
};

}  // namespace keci::nn
