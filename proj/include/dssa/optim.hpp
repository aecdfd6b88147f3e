#pragma once

#include <cstddef>
#include <vector>

#include "dssa/tensor.hpp"

namespace dssa {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction and a constant learning rate.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamOptions opts = {});

  // Applies one update from the current grads. Params without a grad
  // buffer are skipped (they did not take part in the last backward).
  void step();
  void zero_grad();

  std::size_t steps() const { return t_; }
  const AdamOptions& options() const { return opts_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  AdamOptions opts_;
  std::size_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace dssa
