#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "mslu/error.hpp"

namespace mslu::nn {

using Shape = std::vector<std::size_t>;

// Vectorized reductions peel according to the start address, so storage is
// aligned to keep the summation order, and therefore results, reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Graph recording is on by default; NoGradGuard turns it off for the current
// thread (inference, frozen feature extraction).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void()> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

// Reference-semantics handle to a node of the dynamically recorded graph.
// Copies alias the same storage, like a parameter handle in most frameworks.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T fill, bool requires_grad = false);
  static Tensor from(Shape shape, Buffer<T> values, bool requires_grad = false);
  static Tensor from(Shape shape, std::span<const T> values, bool requires_grad = false);
  static Tensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  // Empty until a backward pass reaches this tensor.
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void zero_grad();

  // Scalar tensors only. Gradients accumulate into every reachable leaf that
  // requires grad; callers clear them with zero_grad().
  void backward();

  // Same values, no history.
  Tensor detach() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  // Creates an op result. Parents are recorded only when grad mode is on and
  // at least one of them requires grad; otherwise backward_fn is dropped.
  static Tensor make_result(Shape shape, Buffer<T> values,
                            std::vector<std::shared_ptr<Node<T>>> parents);

 private:
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<Node<T>> node_;
};

// Attach a backward closure to a freshly made result; no-op when the result
// does not record history.
template <typename T, typename F>
void set_backward(Tensor<T>& out, F&& fn) {
  if (out.requires_grad()) out.node()->backward_fn = std::forward<F>(fn);
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mslu::nn
