#include "mslu/nn/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace mslu::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
  auto n = numel(shape);
  return from(std::move(shape), Buffer<T>(n, fill), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::span<const T> values, bool requires_grad) {
  return from(std::move(shape), Buffer<T>(values.begin(), values.end()), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, Buffer<T> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + to_string(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, Buffer<T> values,
                                 std::vector<std::shared_ptr<Node<T>>> parents) {
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) track = track || p->requires_grad;
  }
  Tensor out = from(std::move(shape), std::move(values), track);
  if (track) out.node_->parents = std::move(parents);
  return out;
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(node_->shape, node_->value, false);
}

template <typename T>
void Tensor<T>::backward() {
  if (size() != 1) throw ShapeError("backward() needs a scalar, got " + to_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (n->backward_fn) n->ensure_grad();
  }
  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward_fn) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n->backward_fn();
  }
  // Release interior buffers; leaves keep their accumulated gradients.
  for (auto* n : order) {
    if (n->backward_fn && n != node_.get()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mslu::nn
