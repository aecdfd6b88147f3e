#pragma once

// Differentiable tensor operations. All functions are pure: they never touch
// their inputs' values and build a backward node only when grad recording is
// enabled and some input requires grad.
//
// Image tensors are NHWC: (batch, height, width, channels).

#include <cstddef>
#include <vector>

#include "dssa/tensor.hpp"

namespace dssa {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
// bias has shape (C) and is broadcast over the last axis of x.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
// Mean over one axis; the axis is removed from the result.
template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, long axis);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
// Swaps the trailing two axes.
template <typename T>
Tensor<T> transpose_last(const Tensor<T>& x);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, long axis);

/// Batched matrix product over the trailing two axes.
///
/// a is (..., m, k). b is either (k, n), shared by every leading index, or
/// (..., k, n) with leading axes equal to a's. Result is (..., m, n).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x (..., in) times weight (in, out), plus optional bias (out).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias = {});

// Numerically stable (max-subtracted) softmax.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, long axis);

template <typename T>
struct TopK {
  Tensor<T> values;
  IndexTensor indices;
};

/// k largest entries along `axis`, in descending order; equal values keep
/// the lower index first. Gradient flows to the selected positions only.
template <typename T>
TopK<T> topk(const Tensor<T>& x, std::size_t k, long axis);

/// Batched index selection along `axis`.
///
/// With x shaped L + (N) + R, idx is either (M), shared across L, or L + (M).
/// out[l, j, r] = x[l, idx[l, j], r]; the result is L + (M) + R. Backward
/// scatter-adds, so repeated indices accumulate.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, const IndexTensor& idx, long axis);

/// 2-D cross-correlation. x is NHWC, weight is (kh, kw, in_c / groups, out_c),
/// bias (out_c) is optional. groups == in_c == out_c gives a depth-wise conv.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding, std::size_t groups = 1);

// Per-region channel means over an S x S grid of equal regions: (B, S, S, C).
template <typename T>
Tensor<T> avg_pool_region(const Tensor<T>& x, std::size_t regions);

// Adaptive average pooling to (B, bins, bins, C); cell i spans
// [floor(i*H/bins), ceil((i+1)*H/bins)).
template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::size_t bins);

/// Bilinear resize with half-pixel centers: source coordinate
/// (dst + 0.5) * in / out - 0.5, clamped to the valid range.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);
// Integer upsampling, factor in {2, 4, 8}.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::size_t factor);

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes over the last axis, then applies gamma / beta (shape (C)).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = kLayerNormEps);

// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// (B, H, W, C) -> (B, S*S, H*W/(S*S), C). Region r = ry * S + rx, token
/// t = ty * (W/S) + tx inside it.
template <typename T>
Tensor<T> to_regions(const Tensor<T>& x, std::size_t regions);
// Inverse of to_regions.
template <typename T>
Tensor<T> from_regions(const Tensor<T>& x, std::size_t regions, std::size_t height,
                       std::size_t width);

}  // namespace dssa
