#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <utility>
#include <vector>

#include "keci/autodiff/tape.hpp"
#include "keci/autodiff/tensor.hpp"

namespace keci::ad {

/// Probability floor used by the log losses.
inline constexpr double kProbabilityFloor = 1e-12;

namespace detail {

template <typename T>
using Node = typename Tape<T>::Node;

/// Attaches `fn` to the active tape when a gradient is needed and marks the
/// result as differentiable.
template <typename T, typename Fn>
void record(Tensor<T>& result, std::initializer_list<Tensor<T>> inputs, Fn&& fn) {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) return;
  bool any = false;
  std::vector<std::shared_ptr<TensorImpl<T>>> impls;
  impls.reserve(inputs.size());
  for (const auto& in : inputs) {
    any = any || in.requires_grad();
    impls.push_back(in.impl());
  }
  if (!any) return;
  result.set_requires_grad(true);
  tape->record(std::move(impls), result.impl(), std::forward<Fn>(fn));
}

template <typename T>
void record_many(Tensor<T>& result, const std::vector<Tensor<T>>& inputs,
                 std::function<void(const Node<T>&)> fn) {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) return;
  bool any = false;
  std::vector<std::shared_ptr<TensorImpl<T>>> impls;
  impls.reserve(inputs.size());
  for (const auto& in : inputs) {
    any = any || in.requires_grad();
    impls.push_back(in.impl());
  }
  if (!any) return;
  result.set_requires_grad(true);
  tape->record(std::move(impls), result.impl(), std::move(fn));
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T{0});
  const T* av = a.values().data();
  const T* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      if (aip == T{0}) continue;
      const T* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  Tensor<T> result({m, n}, std::move(out));
  detail::record(result, {a, b}, [m, k, n](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    auto& A = *node.inputs[0];
    auto& B = *node.inputs[1];
    if (A.requires_grad) {
      auto& ga = A.ensure_grad();
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const T g = gout[i * n + j];
          if (g == T{0}) continue;
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * B.values[p * n + j];
        }
    }
    if (B.requires_grad) {
      auto& gb = B.ensure_grad();
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = A.values[i * k + p];
          if (aip == T{0}) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * gout[i * n + j];
        }
    }
  });
  return result;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  Tensor<T> result({n, m}, std::move(out));
  detail::record(result, {a}, [m, n](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    auto& ga = node.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += gout[j * m + i];
  });
  return result;
}

namespace detail {

enum class Broadcast { kSame, kScalarRhs, kScalarLhs };

template <typename T>
Broadcast check_elementwise(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalarRhs;
  if (a.size() == 1) return Broadcast::kScalarLhs;
  throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const auto mode = detail::check_elementwise(a, b, "add");
  const Tensor<T>& big = mode == detail::Broadcast::kScalarLhs ? b : a;
  std::vector<T> out(big.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = mode == detail::Broadcast::kScalarLhs ? a[0] : a[i];
    const T y = mode == detail::Broadcast::kScalarRhs ? b[0] : b[i];
    out[i] = x + y;
  }
  Tensor<T> result(big.shape(), std::move(out));
  detail::record(result, {a, b}, [mode](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    for (int side = 0; side < 2; ++side) {
      auto& in = *node.inputs[side];
      if (!in.requires_grad) continue;
      auto& g = in.ensure_grad();
      const bool reduce = (side == 1 && mode == detail::Broadcast::kScalarRhs) ||
                          (side == 0 && mode == detail::Broadcast::kScalarLhs);
      for (std::size_t i = 0; i < gout.size(); ++i) g[reduce ? 0 : i] += gout[i];
    }
  });
  return result;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto mode = detail::check_elementwise(a, b, "mul");
  const Tensor<T>& big = mode == detail::Broadcast::kScalarLhs ? b : a;
  std::vector<T> out(big.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = mode == detail::Broadcast::kScalarLhs ? a[0] : a[i];
    const T y = mode == detail::Broadcast::kScalarRhs ? b[0] : b[i];
    out[i] = x * y;
  }
  Tensor<T> result(big.shape(), std::move(out));
  detail::record(result, {a, b}, [mode](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    auto& A = *node.inputs[0];
    auto& B = *node.inputs[1];
    auto av = [&](std::size_t i) { return mode == detail::Broadcast::kScalarLhs ? A.values[0] : A.values[i]; };
    auto bv = [&](std::size_t i) { return mode == detail::Broadcast::kScalarRhs ? B.values[0] : B.values[i]; };
    if (A.requires_grad) {
      auto& g = A.ensure_grad();
      const bool reduce = mode == detail::Broadcast::kScalarLhs;
      for (std::size_t i = 0; i < gout.size(); ++i) g[reduce ? 0 : i] += gout[i] * bv(i);
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      const bool reduce = mode == detail::Broadcast::kScalarRhs;
      for (std::size_t i = 0; i < gout.size(); ++i) g[reduce ? 0 : i] += gout[i] * av(i);
    }
  });
  return result;
}

/// Multiplies by a constant.
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.vec());
  for (auto& v : out) v *= c;
  Tensor<T> result(a.shape(), std::move(out));
  detail::record(result, {a}, [c](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    auto& g = node.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += c * gout[i];
  });
  return result;
}

/// a[m x n] + bias[n] broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  detail::require_matrix(a, "add_bias");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.size() != n) {
    throw DimensionError("add_bias shape mismatch: " + shape_str(a.shape()) + " + " +
                         shape_str(bias.shape()));
  }
  std::vector<T> out(a.vec());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[j];
  Tensor<T> result(a.shape(), std::move(out));
  detail::record(result, {a, bias}, [m, n](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    if (node.inputs[0]->requires_grad) {
      auto& g = node.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
    }
    if (node.inputs[1]->requires_grad) {
      auto& g = node.inputs[1]->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += gout[i * n + j];
    }
  });
  return result;
}

/// Concatenation along `axis`; every other extent must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat axis out of range for " + shape_str(ref));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == ref[d];
    if (!ok) {
      throw DimensionError("concat shape mismatch: " + shape_str(ref) + " vs " + shape_str(s));
    }
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  Shape shape = ref;
  shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.shape()[axis] * inner;
    offsets.push_back(offset);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.values().begin() + o * len, len, out.begin() + o * total * inner + offset);
    offset += len;
  }
  Tensor<T> result(std::move(shape), std::move(out));
  detail::record_many<T>(result, parts,
                         [outer, total, inner, offsets, axis](const detail::Node<T>& node) {
                           const auto& gout = node.output->grad;
                           for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                             auto& in = *node.inputs[k];
                             if (!in.requires_grad) continue;
                             auto& g = in.ensure_grad();
                             const std::size_t len = in.shape[axis] * inner;
                             for (std::size_t o = 0; o < outer; ++o)
                               for (std::size_t i = 0; i < len; ++i)
                                 g[o * len + i] += gout[o * total * inner + offsets[k] + i];
                           }
                         });
  return result;
}

/// max(x, 0); the subgradient at 0 is 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.vec());
  for (auto& v : out) v = v > T{0} ? v : T{0};
  Tensor<T> result(a.shape(), std::move(out));
  detail::record(result, {a}, [](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    auto& in = *node.inputs[0];
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < gout.size(); ++i)
      if (in.values[i] > T{0}) g[i] += gout[i];
  });
  return result;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = a[i];
    // Branch keeps exp() from overflowing for large |x|.
    if (x >= T{0}) {
      out[i] = T{1} / (T{1} + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T{1} + e);
    }
  }
  Tensor<T> result(a.shape(), std::move(out));
  detail::record(result, {a}, [](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    const auto& y = node.output->values;
    auto& g = node.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i] * y[i] * (T{1} - y[i]);
  });
  return result;
}

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) throw DimensionError("softmax axis out of range for " + shape_str(shape));
  const std::size_t n = shape[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  std::vector<T> out(x.size());
  const auto& xv = x.vec();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, xv[base + i * inner]);
      T denom = T{0};
      for (std::size_t i = 0; i < n; ++i) {
        const T e = std::exp(xv[base + i * inner] - mx);
        out[base + i * inner] = e;
        denom += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= denom;
    }
  Tensor<T> result(shape, std::move(out));
  detail::record(result, {x}, [outer, inner, n](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    const auto& y = node.output->values;
    auto& g = node.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        T dot = T{0};
        for (std::size_t i = 0; i < n; ++i) dot += gout[base + i * inner] * y[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t idx = base + i * inner;
          g[idx] += y[idx] * (gout[idx] - dot);
        }
      }
  });
  return result;
}

/// Mean of -log(p[target]) over rows. `probs` is a distribution [n] (one
/// target) or a batch [m x n] (m targets). Probabilities are clamped to
/// [1e-12, 1]; an empty batch yields 0.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, const std::vector<std::size_t>& targets) {
  std::size_t rows = 0, n = 0;
  if (probs.rank() == 1) {
    rows = 1;
    n = probs.dim(0);
  } else if (probs.rank() == 2) {
    rows = probs.rows();
    n = probs.cols();
  } else {
    throw DimensionError("cross_entropy expects [n] or [m x n], got " + shape_str(probs.shape()));
  }
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  for (auto t : targets) {
    if (t >= n) {
      throw IndexError("cross_entropy target " + std::to_string(t) + " out of range for " +
                       std::to_string(n) + " classes");
    }
  }
  const T floor = static_cast<T>(kProbabilityFloor);
  T loss = T{0};
  for (std::size_t r = 0; r < rows; ++r) {
    const T p = std::clamp(probs[r * n + targets[r]], floor, T{1});
    loss -= std::log(p);
  }
  if (rows > 0) loss /= static_cast<T>(rows);
  Tensor<T> result = Tensor<T>::scalar(loss);
  detail::record(result, {probs}, [targets, rows, n, floor](const detail::Node<T>& node) {
    const T gout = node.output->grad[0];
    auto& in = *node.inputs[0];
    auto& g = in.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t idx = r * n + targets[r];
      const T p = std::max(in.values[idx], floor);
      g[idx] -= gout / (p * static_cast<T>(rows));
    }
  });
  return result;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, std::size_t target) {
  return cross_entropy(probs, std::vector<std::size_t>{target});
}

/// Mean over all entries of -[t log p + (1-t) log(1-p)], with p and 1-p
/// clamped below at 1e-12.
template <typename T>
Tensor<T> binary_cross_entropy(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("binary_cross_entropy shape mismatch: " + shape_str(pred.shape()) +
                         " vs " + shape_str(target.shape()));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] != T{0} && target[i] != T{1}) {
      throw ValidationError("binary_cross_entropy target must be 0 or 1, got " +
                            std::to_string(static_cast<double>(target[i])));
    }
  }
  const T floor = static_cast<T>(kProbabilityFloor);
  const std::size_t n = pred.size();
  T loss = T{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T p = pred[i];
    loss -= target[i] == T{1} ? std::log(std::max(p, floor)) : std::log(std::max(T{1} - p, floor));
  }
  if (n > 0) loss /= static_cast<T>(n);
  Tensor<T> result = Tensor<T>::scalar(loss);
  detail::record(result, {pred, target}, [n, floor](const detail::Node<T>& node) {
    auto& in = *node.inputs[0];
    if (!in.requires_grad) return;
    const T gout = node.output->grad[0];
    const auto& t = node.inputs[1]->values;
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const T p = in.values[i];
      const T d = t[i] == T{1} ? -T{1} / std::max(p, floor) : T{1} / std::max(T{1} - p, floor);
      g[i] += gout * d / static_cast<T>(n);
    }
  });
  return result;
}

/// Rows of x[m x n] selected by `index` (repeats allowed).
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& index) {
  detail::require_matrix(x, "gather_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(index.size() * n);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= m) {
      throw IndexError("gather_rows index " + std::to_string(index[r]) + " out of range for " +
                       std::to_string(m) + " rows");
    }
    std::copy_n(x.values().begin() + index[r] * n, n, out.begin() + r * n);
  }
  Tensor<T> result({index.size(), n}, std::move(out));
  detail::record(result, {x}, [index, n](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    auto& g = node.inputs[0]->ensure_grad();
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) g[index[r] * n + j] += gout[r * n + j];
  });
  return result;
}

/// Zero tensor of `shape` with out.flat[positions[i]] = x.flat[i].
template <typename T>
Tensor<T> scatter(const Tensor<T>& x, const std::vector<std::size_t>& positions, Shape shape) {
  if (positions.size() != x.size()) {
    throw DimensionError("scatter: " + std::to_string(positions.size()) + " positions for " +
                         std::to_string(x.size()) + " values");
  }
  const std::size_t total = numel(shape);
  std::vector<T> out(total, T{0});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] >= total) throw IndexError("scatter position out of range");
    out[positions[i]] += x[i];
  }
  Tensor<T> result(std::move(shape), std::move(out));
  detail::record(result, {x}, [positions](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    auto& g = node.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < positions.size(); ++i) g[i] += gout[positions[i]];
  });
  return result;
}

/// Column j of x[m x n] as a vector [m].
template <typename T>
Tensor<T> column(const Tensor<T>& x, std::size_t j) {
  detail::require_matrix(x, "column");
  const std::size_t m = x.rows(), n = x.cols();
  if (j >= n) throw IndexError("column index out of range");
  std::vector<T> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = x[i * n + j];
  Tensor<T> result({m}, std::move(out));
  detail::record(result, {x}, [m, n, j](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    auto& g = node.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) g[i * n + j] += gout[i];
  });
  return result;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor<T> result(std::move(shape), x.vec());
  detail::record(result, {x}, [](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    auto& g = node.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
  });
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T{0};
  for (auto v : x.values()) s += v;
  Tensor<T> result = Tensor<T>::scalar(s);
  detail::record(result, {x}, [](const detail::Node<T>& node) {
    const T gout = node.output->grad[0];
    auto& g = node.inputs[0]->ensure_grad();
    for (auto& v : g) v += gout;
  });
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) return Tensor<T>::scalar(T{0});
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

/// Same values, cut from the tape.
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>(x.shape(), x.vec());
}

/// For each span [start, end) of rows in x[n x d], a softmax over
/// scores[start..end) weights the rows; the result is [spans x d].
template <typename T>
Tensor<T> span_attention_pool(const Tensor<T>& x, const Tensor<T>& scores,
                              const std::vector<std::pair<std::size_t, std::size_t>>& spans) {
  detail::require_matrix(x, "span_attention_pool");
  const std::size_t n = x.rows(), d = x.cols();
  if (scores.size() != n) {
    throw DimensionError("span_attention_pool: " + std::to_string(scores.size()) +
                         " scores for " + std::to_string(n) + " rows");
  }
  std::vector<T> out(spans.size() * d, T{0});
  std::vector<T> weights;  // concatenated per-span softmax weights
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const auto [start, end] = spans[s];
    if (start >= end || end > n) throw ContractError("span_attention_pool: empty or out-of-range span");
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t t = start; t < end; ++t) mx = std::max(mx, scores[t]);
    T denom = T{0};
    const std::size_t w0 = weights.size();
    for (std::size_t t = start; t < end; ++t) {
      weights.push_back(std::exp(scores[t] - mx));
      denom += weights.back();
    }
    for (std::size_t t = start; t < end; ++t) {
      T& w = weights[w0 + t - start];
      w /= denom;
      for (std::size_t j = 0; j < d; ++j) out[s * d + j] += w * x[t * d + j];
    }
  }
  Tensor<T> result({spans.size(), d}, std::move(out));
  detail::record(result, {x, scores}, [spans, weights, d](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    auto& X = *node.inputs[0];
    auto& S = *node.inputs[1];
    std::size_t w0 = 0;
    for (std::size_t s = 0; s < spans.size(); ++s) {
      const auto [start, end] = spans[s];
      // dL/dw_t = gout_s . x_t ; softmax backward for scores.
      std::vector<T> dw(end - start, T{0});
      for (std::size_t t = start; t < end; ++t)
        for (std::size_t j = 0; j < d; ++j) dw[t - start] += gout[s * d + j] * X.values[t * d + j];
      if (X.requires_grad) {
        auto& gx = X.ensure_grad();
        for (std::size_t t = start; t < end; ++t)
          for (std::size_t j = 0; j < d; ++j) gx[t * d + j] += weights[w0 + t - start] * gout[s * d + j];
      }
      if (S.requires_grad) {
        auto& gs = S.ensure_grad();
        T dot = T{0};
        for (std::size_t t = start; t < end; ++t) dot += dw[t - start] * weights[w0 + t - start];
        for (std::size_t t = start; t < end; ++t)
          gs[t] += weights[w0 + t - start] * (dw[t - start] - dot);
      }
      w0 += end - start;
    }
  });
  return result;
}

/// Softmax applied independently within each group of flat indices into
/// `scores`. Every index must belong to exactly one group.
template <typename T>
Tensor<T> grouped_softmax(const Tensor<T>& scores, const std::vector<std::vector<std::size_t>>& groups) {
  std::vector<T> out(scores.size(), T{0});
  std::vector<char> seen(scores.size(), 0);
  for (const auto& group : groups) {
    T mx = -std::numeric_limits<T>::infinity();
    for (auto i : group) {
      if (i >= scores.size() || seen[i]) throw ContractError("grouped_softmax: bad group index");
      seen[i] = 1;
      mx = std::max(mx, scores[i]);
    }
    T denom = T{0};
    for (auto i : group) {
      out[i] = std::exp(scores[i] - mx);
      denom += out[i];
    }
    for (auto i : group) out[i] /= denom;
  }
  Tensor<T> result(scores.shape(), std::move(out));
  detail::record(result, {scores}, [groups](const detail::Node<T>& node) {
    const auto& gout = node.output->grad;
    const auto& y = node.output->values;
    auto& g = node.inputs[0]->ensure_grad();
    for (const auto& group : groups) {
      T dot = T{0};
      for (auto i : group) dot += gout[i] * y[i];
      for (auto i : group) g[i] += y[i] * (gout[i] - dot);
    }
  });
  return result;
}

}  // namespace keci::ad
