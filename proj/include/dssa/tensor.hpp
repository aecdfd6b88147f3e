#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dssa/errors.hpp"

namespace dssa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Resolves a possibly negative axis against a rank; throws ParameterError.
std::size_t normalize_axis(long axis, std::size_t rank);

/// Integer companion of Tensor, used for top-k / gather index sets.
struct IndexTensor {
  Shape shape;
  std::vector<std::size_t> values;

  IndexTensor() = default;
  IndexTensor(Shape s, std::vector<std::size_t> v);

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  IndexTensor reshaped(Shape s) const;
};

// Gradient recording switch (thread-local). Parameter updates and inference
// run under NoGradGuard so no graph is built.
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
  std::vector<T> values;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor handle with optional reverse-mode tracking.
///
/// Copies share the underlying node, the same way framework tensors do;
/// use clone() for an independent buffer. Instantiated for float (training
/// and inference) and double (gradient verification).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(long axis) const { return node_->shape[normalize_axis(axis, rank())]; }
  std::size_t numel() const { return node_->values.size(); }

  std::span<T> data() { return node_->values; }
  std::span<const T> data() const { return node_->values; }
  T item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() { return node_->grad_buffer(); }
  void zero_grad();

  // Leaf copy of the values with no history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  /// Reverse-mode sweep from this scalar. Each reachable node runs its
  /// backward function exactly once, in reverse topological order.
  void backward() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  static Tensor from_node(std::shared_ptr<Node<T>> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
void backward(const Tensor<T>& loss) {
  loss.backward();
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dssa
