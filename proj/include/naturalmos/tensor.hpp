#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace naturalmos {

namespace detail {

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace detail

/// N-dimensional array with an optional gradient and a reverse-mode tape.
/// Copies share the underlying node (shallow); clone() deep-copies values.
/// T is float for training, double for gradient verification.
template <typename T>
class Tensor {
 public:
  struct Node {
    std::vector<std::size_t> shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until ensure_grad()
    bool requires_grad = false;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
  };

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->values.assign(detail::shape_numel(node_->shape), fill);
    node_->requires_grad = requires_grad;
  }

  static Tensor from_values(std::vector<std::size_t> shape, std::vector<T> values,
                            bool requires_grad = false) {
    if (detail::shape_numel(shape) != values.size())
      throw std::invalid_argument("Tensor: shape " + detail::shape_str(shape) +
                                  " does not match " + std::to_string(values.size()) + " values");
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_values({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->values.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  T* data() { return node_->values.data(); }
  const T* data() const { return node_->values.data(); }
  std::vector<T>& values() { return node_->values; }
  const std::vector<T>& values() const { return node_->values; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::vector<T>& grad() { return node_->grad; }
  const std::vector<T>& grad() const { return node_->grad; }

  void ensure_grad() {
    if (node_->grad.empty()) node_->grad.assign(numel(), T(0));
  }
  void zero_grad() { node_->grad.assign(numel(), T(0)); }

  T item() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::item: not a scalar");
    return node_->values[0];
  }

  /// Deep copy of values (and grad, if present); detached from any graph.
  Tensor clone() const {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = node_->shape;
    t.node_->values = node_->values;
    t.node_->grad = node_->grad;
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  bool all_finite() const {
    for (T v : node_->values)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::shared_ptr<Node> node() const { return node_; }

  /// Internal: build an op result node. Parents are recorded (and the
  /// backward function kept) only when some input requires grad.
  static Tensor make_op(std::vector<std::size_t> shape, std::vector<T> values,
                        std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn) {
    Tensor out = from_values(std::move(shape), std::move(values));
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
      out.node_->requires_grad = true;
      out.node_->parents.reserve(inputs.size());
      for (auto& in : inputs) out.node_->parents.push_back(in.node_);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar loss. Populates grad on every
/// requires_grad tensor reachable from `loss`, then releases the tape;
/// running it twice over the same graph is an error.
template <typename T>
void backward(const Tensor<T>& loss) {
  using Node = typename Tensor<T>::Node;
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                detail::shape_str(loss.shape()));

  // Topological order by iterative DFS over parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->consumed)
      throw std::logic_error("backward: graph already consumed; rerun the forward pass");
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order)
    if (n->requires_grad && n->grad.empty()) n->grad.assign(n->values.size(), T(0));

  if (loss.node()->grad.empty()) loss.node()->grad.assign(1, T(0));
  loss.node()->grad[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
  }

  // Release activations and invalidate the tape.
  for (Node* n : order) {
    n->consumed = !n->parents.empty() || n == loss.node().get();
    n->backward_fn = nullptr;
    n->parents.clear();
  }
}

/// Named parameter map with deterministic (lexicographic) iteration order.
template <typename T>
class ParameterSet {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    auto [it, inserted] = params_.emplace(name, std::move(t));
    if (!inserted) throw std::invalid_argument("ParameterSet: duplicate name " + name);
    return it->second;
  }

  Tensor<T>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParameterSet: no parameter " + name);
    return it->second;
  }
  const Tensor<T>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParameterSet: no parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  /// Allocate (or reset) zero gradients on every trainable parameter.
  void zero_grads() {
    for (auto& [name, t] : params_)
      if (t.requires_grad()) t.zero_grad();
  }

  ParameterSet clone() const {
    ParameterSet out;
    for (const auto& [name, t] : params_) out.params_.emplace(name, t.clone());
    return out;
  }

  std::size_t total_parameters() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
  }

 private:
  std::map<std::string, Tensor<T>> params_;
};

}  // namespace naturalmos
