#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "pugan/tensor.hpp"

namespace pugan {

// Reverse-mode differentiation over a dynamically recorded graph. Every op
// returns a Var whose node remembers its inputs and a closure that pushes the
// node's gradient back into them. Graph recording is skipped when no input
// requires a gradient or when a NoGradGuard is active.

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient storage, zero-initialised on first use.
  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  /// Direct access for optimizers and finite-difference probes.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }

  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad = Tensor<T>(); }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  /// Seeds d(this)/d(this) = 1 and propagates. `this` must hold one element.
  void backward() const;

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds an op result. The closure is attached only when recording is on and
/// at least one input requires a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (GradMode::enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      node->inputs.reserve(inputs.size());
      for (auto& in : inputs) node->inputs.push_back(in.node());
    }
  }
  return Var<T>(std::move(node));
}

template <typename T>
void Var<T>::backward() const {
  if (node_->value.size() != 1) throw ShapeError("backward() needs a scalar, got " + to_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order without recursion depth
  // limits. The order owns its nodes because inputs are released as they are consumed.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::vector<std::pair<std::shared_ptr<Node<T>>, std::size_t>> stack;
  std::unordered_set<Node<T>*> seen{node_.get()};
  stack.emplace_back(node_, 0);
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->inputs.size()) {
      std::shared_ptr<Node<T>> child = top.first->inputs[top.second++];
      if (child->requires_grad && seen.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  node_->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = it->get();
    if (n->backward && !n->grad.empty()) {
      n->backward(*n);
      // Interior graph is single-use; release it as soon as it has been consumed.
      n->backward = nullptr;
      n->inputs.clear();
      n->grad = Tensor<T>();
    }
  }
}

}  // namespace pugan
