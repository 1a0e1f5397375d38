#include "lapcs/autograd.hpp"

#include <unordered_set>

namespace lapcs {

namespace {
bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

NoGradGuard::NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
NoGradGuard::~NoGradGuard() { GradMode::set_enabled(prev_); }

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>(value.dims());
  return grad;
}

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
Var<T> Var<T>::make_result(Tensor<T> value, std::vector<Var> inputs,
                           std::function<void(Node<T>&)> backward_fn) {
  Var out(std::move(value));
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
  out.node_->backward_fn = std::move(backward_fn);
  return out;
}

template <typename T>
std::vector<Node<T>*> reverse_topological_order(const Var<T>& root) {
  // Iterative post-order DFS, then reversed: consumers precede producers.
  std::vector<Node<T>*> post;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  Node<T>* start = root.node().get();
  if (!start->requires_grad) return post;
  stack.emplace_back(start, 0);
  seen.insert(start);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  return {post.rbegin(), post.rend()};
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss) throw ArgumentError("backward called on an empty variable");
  if (loss.value().size() != 1)
    throw ArgumentError("backward requires a single-element loss, got dims " +
                        to_string(loss.dims()));
  auto order = reverse_topological_order(loss);
  if (order.empty()) return;
  for (auto* node : order)
    if (!node->is_leaf()) node->grad = Tensor<T>();
  order.front()->grad_buffer()[0] += T(1);
  for (auto* node : order) {
    if (node->is_leaf() || node->grad.empty()) continue;
    node->backward_fn(*node);
  }
  // Intermediate gradients are not observable after the sweep.
  for (auto* node : order)
    if (!node->is_leaf()) node->grad = Tensor<T>();
}

template <typename T>
Parameter<T>::Parameter(std::string name, Tensor<T> value)
    : name_(std::move(name)), var_(std::move(value), true), momentum_(var_.dims()) {}

template <typename T>
Parameter<T>::Parameter(const Parameter& other)
    : name_(other.name_), var_(other.value(), true), momentum_(other.momentum_) {
  if (other.var_.has_grad()) var_.grad_buffer() = other.var_.grad();
}

template <typename T>
Parameter<T>& Parameter<T>::operator=(const Parameter& other) {
  if (this != &other) *this = Parameter(other);
  return *this;
}

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template class Parameter<float>;
template class Parameter<double>;
template void backward(const Var<float>&);
template void backward(const Var<double>&);
template std::vector<Node<float>*> reverse_topological_order(const Var<float>&);
template std::vector<Node<double>*> reverse_topological_order(const Var<double>&);

}  // namespace lapcs
