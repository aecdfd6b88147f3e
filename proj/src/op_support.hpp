#pragma once

#include <initializer_list>
#include <utility>

#include "dssa/tensor.hpp"

namespace dssa::detail {

// Wraps freshly computed values into a tensor and, when recording, attaches
// the inputs as parents plus the backward closure. The closure must not
// capture the output tensor (that would form a cycle); it receives the output
// node instead.
template <typename T, typename Fn>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs, Fn&& backward_fn) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool any = false;
  for (auto* in : inputs) any = any || (in->defined() && in->requires_grad());
  if (!any) return out;
  auto* node = out.node();
  node->requires_grad = true;
  for (auto* in : inputs) node->parents.push_back(in->defined() ? in->node_ptr() : nullptr);
  node->backward_fn = std::forward<Fn>(backward_fn);
  return out;
}

// Grad buffer of parent i if it takes gradients, else nullptr.
template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  return p->grad_buffer().data();
}

template <typename T>
const std::vector<T>& parent_values(const Node<T>& self, std::size_t i) {
  return self.parents[i]->values;
}

}  // namespace dssa::detail
