#pragma once

// Parameter holders for the learned layers, plus the deterministic
// initializer. Weights are drawn uniformly in +-1/sqrt(fan_in) (conv and
// linear weights and biases); layer-norm gains start at 1, offsets at 0.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dssa/ops.hpp"

namespace dssa {

using Rng = std::mt19937_64;

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

template <typename T>
Tensor<T> uniform_param(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = T(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> constant_param(Shape shape, T value) {
  return Tensor<T>(std::move(shape), value, true);
}

template <typename T>
struct Conv2dParams {
  Tensor<T> weight;  // (k, k, in_c / groups, out_c)
  Tensor<T> bias;    // (out_c) or undefined
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;

  static Conv2dParams make(std::size_t in_c, std::size_t out_c, std::size_t k,
                           std::size_t stride, std::size_t padding, std::size_t groups,
                           bool with_bias, Rng& rng) {
    Conv2dParams p;
    const double bound = 1.0 / std::sqrt(double(k * k * (in_c / groups)));
    p.weight = uniform_param<T>(Shape{k, k, in_c / groups, out_c}, bound, rng);
    if (with_bias) p.bias = uniform_param<T>(Shape{out_c}, bound, rng);
    p.stride = stride;
    p.padding = padding;
    p.groups = groups;
    return p;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, weight, bias, stride, padding, groups);
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", weight});
    if (bias.defined()) out.push_back({prefix + ".bias", bias});
  }
};

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // (in, out)
  Tensor<T> bias;    // (out) or undefined

  static LinearParams make(std::size_t in, std::size_t out, bool with_bias, Rng& rng) {
    LinearParams p;
    const double bound = 1.0 / std::sqrt(double(in));
    p.weight = uniform_param<T>(Shape{in, out}, bound, rng);
    if (with_bias) p.bias = uniform_param<T>(Shape{out}, bound, rng);
    return p;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", weight});
    if (bias.defined()) out.push_back({prefix + ".bias", bias});
  }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;

  static LayerNormParams make(std::size_t channels) {
    return {constant_param<T>(Shape{channels}, T(1)), constant_param<T>(Shape{channels}, T(0))};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

}  // namespace dssa
