#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lapcs/tensor.hpp"

namespace lapcs {

// Process-wide switch for graph recording. Evaluation paths turn it off so
// forward passes keep no references to intermediate activations.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  Tensor<T>& grad_buffer();
};

// Handle to a value in the recorded graph. Copies alias the same node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Dims& dims() const { return node_->value.dims(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

  // Builds the result of an op. The backward closure is kept only when
  // recording is on and some input needs a gradient.
  static Var make_result(Tensor<T> value, std::vector<Var> inputs,
                         std::function<void(Node<T>&)> backward_fn);

 private:
  std::shared_ptr<Node<T>> node_;
};

// Reverse-mode sweep from a single-element tensor. Leaf gradients accumulate
// across calls; intermediate gradients are rebuilt on every call.
template <typename T>
void backward(const Var<T>& loss);

// Nodes reachable from `root` through recorded edges, ordered so every node
// appears after all of its consumers.
template <typename T>
std::vector<Node<T>*> reverse_topological_order(const Var<T>& root);

// A learnable tensor with its optimizer state.
template <typename T>
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor<T> value);
  Parameter(const Parameter& other);
  Parameter& operator=(const Parameter& other);
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  const std::string& name() const { return name_; }
  Var<T>& var() { return var_; }
  const Var<T>& var() const { return var_; }
  const Tensor<T>& value() const { return var_.value(); }
  Tensor<T>& mutable_value() { return var_.mutable_value(); }
  const Tensor<T>& momentum() const { return momentum_; }
  Tensor<T>& mutable_momentum() { return momentum_; }

 private:
  std::string name_;
  Var<T> var_;
  Tensor<T> momentum_;
};

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Var<float>;
extern template class Var<double>;
extern template class Parameter<float>;
extern template class Parameter<double>;

}  // namespace lapcs
