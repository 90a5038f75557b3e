#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "keci/autodiff/tensor.hpp"

namespace keci::ad {

/// Eager reverse-mode tape. Ops append a node when any input requires a
/// gradient and a tape is active on the calling thread.
template <typename T>
class Tape {
 public:
  using ImplPtr = std::shared_ptr<TensorImpl<T>>;

  struct Node {
    std::vector<ImplPtr> inputs;
    ImplPtr output;
    // Reads output->grad and accumulates into the inputs that require grad.
    std::function<void(const Node&)> backward;
  };

  void record(std::vector<ImplPtr> inputs, ImplPtr output, std::function<void(const Node&)> fn) {
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(fn)});
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Seeds d(loss)/d(loss) = 1, runs every node once in reverse order and
  /// clears the tape. Gradients accumulate into existing grad buffers.
  void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (loss.requires_grad()) {
      loss.impl()->ensure_grad()[0] += T{1};
      for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;  // not on a path to the loss
        it->backward(*it);
      }
    }
    // Intermediate gradients are only meaningful during the sweep.
    for (auto& node : nodes_) {
      if (!node.output->requires_grad) continue;
      node.output->grad.clear();
    }
    nodes_.clear();
  }

 private:
  std::vector<Node> nodes_;
};

template <typename T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

/// Makes `tape` the recording target for the current thread while in scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(active_tape<T>()) { active_tape<T>() = &tape; }
  ~TapeScope() { active_tape<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Disables recording on the current thread while in scope.
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : previous_(active_tape<T>()) { active_tape<T>() = nullptr; }
  ~NoGradScope() { active_tape<T>() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Backward through the tape active on this thread.
template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) throw ContractError("backward() called with no active tape");
  tape->backward(loss);
}

}  // namespace keci::ad
