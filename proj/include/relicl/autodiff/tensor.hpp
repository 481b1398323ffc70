#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "relicl/core/error.hpp"

namespace relicl::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

/// Work counters used by cost tests: multiply-adds in matmul and key-query
/// score evaluations in attention.
struct OpCount {
  std::uint64_t matmul_madds = 0;
  std::uint64_t attention_scores = 0;
};

inline OpCount& op_count() {
  thread_local OpCount count;
  return count;
}

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // reads this->grad, accumulates into parents

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor with up to 4 axes and an optional tape entry.
/// Copies share the underlying node.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    if (shape.empty() || shape.size() > 4) throw ShapeError("tensors have 1 to 4 axes, got " + shape_str(shape));
    auto n = std::make_shared<Node<T>>();
    n->value.assign(numel(shape), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (numel(shape) != values.size())
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    Tensor t = zeros(std::move(shape), requires_grad);
    t.node_->value = std::move(values);
    return t;
  }
  static Tensor scalar(T v) { return from({1}, {v}); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  /// Last axis length; rows() * cols() == size().
  std::size_t cols() const { return node_->shape.back(); }
  std::size_t rows() const { return size() / cols(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<T>& value() { return node_->value; }
  const std::vector<T>& value() const { return node_->value; }
  T* data() { return node_->value.data(); }
  const T* data() const { return node_->value.data(); }
  T item() const {
    if (size() != 1) throw ShapeError("item() needs a single value, shape " + shape_str(shape()));
    return node_->value[0];
  }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  /// Gradient after backward(); zeros when the tensor was not reached.
  std::vector<T> grad() const { return node_->grad.empty() ? std::vector<T>(size(), T(0)) : node_->grad; }
  void zero_grad() { node_->grad.clear(); }
  std::vector<T>& grad_buffer() const { return node_->ensure_grad(); }

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  /// A leaf with the same values and no history.
  Tensor detach() const { return from(shape(), value()); }

 private:
  std::shared_ptr<Node<T>> node_;
};

inline bool& grad_disabled() {
  thread_local bool off = false;
  return off;
}

/// Disables tape recording on this thread while alive (inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_disabled()) { grad_disabled() = true; }
  ~NoGradGuard() { grad_disabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Creates an op result. `backward` is installed only when some parent needs
/// gradients, so inference builds no tape.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  bool rg = false;
  if (!grad_disabled())
    for (auto& p : parents) rg = rg || p.requires_grad();
  if (rg) {
    n->requires_grad = true;
    for (auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable node that requires them.
template <class T>
void backward(Tensor<T>& loss) {
  if (loss.size() != 1) throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{&loss.node(), 0}};
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<T>* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss.node().ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Free intermediate buffers; leaves keep their gradients.
  for (Node<T>* n : order)
    if (n->backward) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
}

}  // namespace relicl::ad
