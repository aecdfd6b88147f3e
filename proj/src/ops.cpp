#include "dssa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dssa/kernels.hpp"
#include "op_support.hpp"

namespace dssa {

using detail::make_result;
using detail::parent_grad;
using detail::parent_values;

namespace {

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                         " differ");
  }
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(s));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Row-permutation op: out row i is input row map[i]. `map` is a bijection.
template <typename T>
Tensor<T> permute_rows(const Tensor<T>& x, std::vector<std::size_t> map, Shape out_shape,
                       std::size_t row_len) {
  const auto& xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    std::copy_n(xv.begin() + map[i] * row_len, row_len, out.begin() + i * row_len);
  }
  return make_result<T>(std::move(out_shape), std::move(out), {&x},
                        [map = std::move(map), row_len](Node<T>& self) {
                          T* gx = parent_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t i = 0; i < map.size(); ++i) {
                            const T* g = self.grad.data() + i * row_len;
                            T* d = gx + map[i] * row_len;
                            for (std::size_t c = 0; c < row_len; ++c) d[c] += g[c];
                          }
                        });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (T* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    const auto& av = parent_values(self, 0);
    const auto& bv = parent_values(self, 1);
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return make_result<T>(x.shape(), std::move(out), {&x}, [factor](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.dim(-1)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t c = bias.numel(), rows = x.numel() / c;
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = x.data()[r * c + j] + bias.data()[j];
  return make_result<T>(x.shape(), std::move(out), {&x, &bias}, [rows, c](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[r * c + j];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return make_result<T>(Shape{}, std::vector<T>{acc}, {&x}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const T up = self.grad[0];
      const std::size_t n = self.parents[0]->values.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += up;
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / T(x.numel()));
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, long axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + long(ax));
  std::vector<T> out(s.outer * s.inner, T(0));
  const T inv = T(1) / T(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    T* dst = out.data() + o * s.inner;
    for (std::size_t e = 0; e < s.extent; ++e) {
      const T* src = x.data().data() + (o * s.extent + e) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < s.inner; ++i) dst[i] *= inv;
  }
  return make_result<T>(std::move(out_shape), std::move(out), {&x}, [s, inv](Node<T>& self) {
    T* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t e = 0; e < s.extent; ++e) {
        T* dst = g + (o * s.extent + e) * s.inner;
        const T* up = self.grad.data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += up[i] * inv;
      }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), {&x}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  if (axes.size() != rank) throw ParameterError("permute: axes length != rank");
  std::vector<bool> used(rank, false);
  for (auto a : axes) {
    if (a >= rank || used[a]) throw ParameterError("permute: axes are not a permutation");
    used[a] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in[axes[i]];

  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  const std::size_t n = x.numel();
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> counter(rank, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += counter[i] * in_strides[axes[i]];
    map[o] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  return permute_rows(x, std::move(map), std::move(out_shape), 1);
}

template <typename T>
Tensor<T> transpose_last(const Tensor<T>& x) {
  if (x.rank() < 2) throw DimensionError("transpose_last: rank < 2");
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
  return permute(x, axes);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, long axis) {
  if (parts.empty()) throw ParameterError("concat: no inputs");
  const std::size_t ax = normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  Shape expected = out_shape;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != expected.size()) throw DimensionError("concat: rank mismatch");
    probe[ax] = 0;
    if (probe != expected) {
      throw DimensionError("concat: " + shape_str(p.shape()) + " incompatible with " +
                           shape_str(parts[0].shape()));
    }
    out_shape[ax] += p.dim(long(ax));
  }
  const AxisSplit s = split_at(out_shape, ax);
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t ext = p.dim(long(ax));
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(p.data().begin() + o * ext * s.inner, ext * s.inner,
                  out.begin() + (o * s.extent + off) * s.inner);
    }
    off += ext;
  }

  Tensor<T> result(out_shape, std::move(out));
  if (!grad_enabled()) return result;
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (!any) return result;
  auto* node = result.node();
  node->requires_grad = true;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    node->parents.push_back(p.node_ptr());
    extents.push_back(p.dim(long(ax)));
  }
  node->backward_fn = [s, offsets, extents](Node<T>& self) {
    for (std::size_t k = 0; k < extents.size(); ++k) {
      T* g = parent_grad(self, k);
      if (!g) continue;
      for (std::size_t o = 0; o < s.outer; ++o) {
        const T* src = self.grad.data() + (o * s.extent + offsets[k]) * s.inner;
        T* dst = g + o * extents[k] * s.inner;
        for (std::size_t i = 0; i < extents[k] * s.inner; ++i) dst[i] += src[i];
      }
    }
  };
  return result;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  auto fail = [&] {
    throw DimensionError("matmul: shapes " + shape_str(as) + " and " + shape_str(bs) +
                         " are not conformable");
  };
  if (as.size() < 2 || bs.size() < 2) fail();
  kernels::MatmulGeometry g;
  g.m = as[as.size() - 2];
  g.k = as.back();
  g.n = bs.back();
  if (bs[bs.size() - 2] != g.k) fail();
  g.shared_rhs = bs.size() == 2;
  g.batch = a.numel() / (g.m * g.k);
  if (!g.shared_rhs) {
    if (as.size() != bs.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) fail();
  }
  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(g.n);
  std::vector<T> out(g.batch * g.m * g.n);
  kernels::matmul(g, a.data().data(), b.data().data(), out.data());
  return make_result<T>(std::move(out_shape), std::move(out), {&a, &b}, [g](Node<T>& self) {
    const auto& av = parent_values(self, 0);
    const auto& bv = parent_values(self, 1);
    if (T* ga = parent_grad(self, 0)) kernels::matmul_grad_a(g, self.grad.data(), bv.data(), ga);
    if (T* gb = parent_grad(self, 1)) kernels::matmul_grad_b(g, av.data(), self.grad.data(), gb);
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2) {
    throw DimensionError("linear: weight must be (in, out), got " + shape_str(weight.shape()));
  }
  Tensor<T> y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, long axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  std::vector<T> out(x.numel());
  const T* xv = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      T mx = xv[base];
      for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, xv[base + e * s.inner]);
      T total = 0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const T v = std::exp(xv[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  return make_result<T>(x.shape(), std::move(out), {&x}, [s](Node<T>& self) {
    T* gx = parent_grad(self, 0);
    if (!gx) return;
    const T* y = self.values.data();
    const T* gy = self.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        T dot = 0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t p = base + e * s.inner;
          dot += gy[p] * y[p];
        }
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t p = base + e * s.inner;
          gx[p] += y[p] * (gy[p] - dot);
        }
      }
  });
}

template <typename T>
TopK<T> topk(const Tensor<T>& x, std::size_t k, long axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (k < 1 || k > s.extent) {
    throw ParameterError("topk: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(s.extent) + "]");
  }
  Shape out_shape = x.shape();
  out_shape[ax] = k;
  const std::size_t lines = s.outer * s.inner;
  std::vector<T> vals(lines * k);
  std::vector<std::size_t> idx(lines * k);
  std::vector<std::size_t> order(s.extent);
  const T* xv = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + long(k), order.end(),
                        [&](std::size_t l, std::size_t r) {
                          const T vl = xv[base + l * s.inner], vr = xv[base + r * s.inner];
                          return vl > vr || (vl == vr && l < r);
                        });
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t dst = (o * k + j) * s.inner + i;
        idx[dst] = order[j];
        vals[dst] = xv[base + order[j] * s.inner];
      }
    }
  IndexTensor indices(out_shape, idx);
  auto values = make_result<T>(out_shape, std::move(vals), {&x},
                               [s, k, idx = std::move(idx)](Node<T>& self) {
                                 T* gx = parent_grad(self, 0);
                                 if (!gx) return;
                                 for (std::size_t o = 0; o < s.outer; ++o)
                                   for (std::size_t j = 0; j < k; ++j)
                                     for (std::size_t i = 0; i < s.inner; ++i) {
                                       const std::size_t p = (o * k + j) * s.inner + i;
                                       gx[(o * s.extent + idx[p]) * s.inner + i] += self.grad[p];
                                     }
                               });
  return TopK<T>{std::move(values), std::move(indices)};
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, const IndexTensor& idx, long axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  const bool shared = idx.rank() == 1;
  if (!shared) {
    if (idx.rank() != ax + 1 || !std::equal(x.shape().begin(), x.shape().begin() + long(ax),
                                            idx.shape.begin())) {
      throw DimensionError("gather: index shape " + shape_str(idx.shape) +
                           " does not match leading axes of " + shape_str(x.shape()));
    }
  }
  const std::size_t m = idx.shape.back();
  for (auto v : idx.values) {
    if (v >= s.extent) {
      throw IndexError("gather: index " + std::to_string(v) + " out of range for extent " +
                       std::to_string(s.extent));
    }
  }
  Shape out_shape = x.shape();
  out_shape[ax] = m;
  std::vector<T> out(s.outer * m * s.inner);
  const T* xv = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t src = idx.values[shared ? j : o * m + j];
      std::copy_n(xv + (o * s.extent + src) * s.inner, s.inner, out.data() + (o * m + j) * s.inner);
    }
  return make_result<T>(std::move(out_shape), std::move(out), {&x},
                        [s, m, shared, iv = idx.values](Node<T>& self) {
                          T* gx = parent_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t o = 0; o < s.outer; ++o)
                            for (std::size_t j = 0; j < m; ++j) {
                              const std::size_t src = iv[shared ? j : o * m + j];
                              T* d = gx + (o * s.extent + src) * s.inner;
                              const T* g = self.grad.data() + (o * m + j) * s.inner;
                              for (std::size_t i = 0; i < s.inner; ++i) d[i] += g[i];
                            }
                        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding, std::size_t groups) {
  require_rank("conv2d input", x.shape(), 4);
  require_rank("conv2d weight", weight.shape(), 4);
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (groups == 0 || ws[2] * groups != xs[3]) {
    throw ParameterError("conv2d: weight " + shape_str(ws) + " with groups=" +
                         std::to_string(groups) + " incompatible with input channels " +
                         std::to_string(xs[3]));
  }
  auto g = kernels::ConvGeometry::make(xs[0], xs[1], xs[2], xs[3], ws[3], ws[0], ws[1], stride,
                                       padding, groups);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.out_c)) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(g.out_c) + " output channels");
  }
  std::vector<T> out(g.batch * g.out_h * g.out_w * g.out_c);
  kernels::conv2d_forward(g, x.data().data(), weight.data().data(),
                          bias.defined() ? bias.data().data() : nullptr, out.data());
  return make_result<T>(Shape{g.batch, g.out_h, g.out_w, g.out_c}, std::move(out),
                        {&x, &weight, &bias}, [g](Node<T>& self) {
                          const auto& xv = parent_values(self, 0);
                          const auto& wv = parent_values(self, 1);
                          if (T* gx = parent_grad(self, 0)) {
                            kernels::conv2d_backward_input(g, self.grad.data(), wv.data(), gx);
                          }
                          T* gw = parent_grad(self, 1);
                          T* gb = parent_grad(self, 2);
                          if (gw) {
                            kernels::conv2d_backward_weight(g, xv.data(), self.grad.data(), gw,
                                                            gb);
                          } else if (gb) {
                            const std::size_t pixels = g.batch * g.out_h * g.out_w;
                            for (std::size_t p = 0; p < pixels; ++p)
                              for (std::size_t c = 0; c < g.out_c; ++c)
                                gb[c] += self.grad[p * g.out_c + c];
                          }
                        });
}

template <typename T>
Tensor<T> avg_pool_region(const Tensor<T>& x, std::size_t regions) {
  require_rank("avg_pool_region", x.shape(), 4);
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (regions == 0 || H % regions != 0 || W % regions != 0) {
    throw ParameterError("avg_pool_region: extent " + std::to_string(H) + "x" +
                         std::to_string(W) + " not divisible by " + std::to_string(regions));
  }
  Tensor<T> m = mean_axis(to_regions(x, regions), 2);
  return reshape(m, Shape{B, regions, regions, C});
}

template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::size_t bins) {
  require_rank("adaptive_avg_pool", x.shape(), 4);
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (bins == 0 || H < bins || W < bins) {
    throw ParameterError("adaptive_avg_pool: input " + std::to_string(H) + "x" +
                         std::to_string(W) + " smaller than bin count " + std::to_string(bins));
  }
  auto cell = [](std::size_t i, std::size_t in, std::size_t out) {
    return std::pair<std::size_t, std::size_t>{(i * in) / out, ((i + 1) * in + out - 1) / out};
  };
  std::vector<T> out(B * bins * bins * C, T(0));
  const T* xv = x.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t by = 0; by < bins; ++by)
      for (std::size_t bx = 0; bx < bins; ++bx) {
        auto [y0, y1] = cell(by, H, bins);
        auto [x0, x1] = cell(bx, W, bins);
        T* dst = out.data() + ((b * bins + by) * bins + bx) * C;
        for (std::size_t yy = y0; yy < y1; ++yy)
          for (std::size_t xx = x0; xx < x1; ++xx) {
            const T* src = xv + ((b * H + yy) * W + xx) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
          }
        const T inv = T(1) / T((y1 - y0) * (x1 - x0));
        for (std::size_t c = 0; c < C; ++c) dst[c] *= inv;
      }
  return make_result<T>(Shape{B, bins, bins, C}, std::move(out), {&x},
                        [B, H, W, C, bins, cell](Node<T>& self) {
                          T* gx = parent_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t by = 0; by < bins; ++by)
                              for (std::size_t bx = 0; bx < bins; ++bx) {
                                auto [y0, y1] = cell(by, H, bins);
                                auto [x0, x1] = cell(bx, W, bins);
                                const T inv = T(1) / T((y1 - y0) * (x1 - x0));
                                const T* g = self.grad.data() + ((b * bins + by) * bins + bx) * C;
                                for (std::size_t yy = y0; yy < y1; ++yy)
                                  for (std::size_t xx = x0; xx < x1; ++xx) {
                                    T* d = gx + ((b * H + yy) * W + xx) * C;
                                    for (std::size_t c = 0; c < C; ++c) d[c] += g[c] * inv;
                                  }
                              }
                        });
}

namespace {

struct LerpAxis {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

LerpAxis half_pixel_axis(std::size_t in, std::size_t out) {
  LerpAxis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  const double ratio = double(in) / double(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (double(i) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    std::size_t lo = std::min<std::size_t>(std::size_t(src), in - 1);
    a.lo[i] = lo;
    a.hi[i] = std::min(lo + 1, in - 1);
    a.frac[i] = src - double(lo);
  }
  return a;
}

}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  require_rank("resize_bilinear", x.shape(), 4);
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (out_h == 0 || out_w == 0) throw ParameterError("resize_bilinear: empty output");
  LerpAxis ay = half_pixel_axis(H, out_h), ax = half_pixel_axis(W, out_w);
  std::vector<T> out(B * out_h * out_w * C);
  const T* xv = x.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const T fy = T(ay.frac[oy]);
      const T* r0 = xv + (b * H + ay.lo[oy]) * W * C;
      const T* r1 = xv + (b * H + ay.hi[oy]) * W * C;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T fx = T(ax.frac[ox]);
        const T* p00 = r0 + ax.lo[ox] * C;
        const T* p01 = r0 + ax.hi[ox] * C;
        const T* p10 = r1 + ax.lo[ox] * C;
        const T* p11 = r1 + ax.hi[ox] * C;
        T* d = out.data() + ((b * out_h + oy) * out_w + ox) * C;
        const T w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
        for (std::size_t c = 0; c < C; ++c)
          d[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
      }
    }
  return make_result<T>(Shape{B, out_h, out_w, C}, std::move(out), {&x},
                        [B, H, W, C, out_h, out_w, ay, ax](Node<T>& self) {
                          T* gx = parent_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t oy = 0; oy < out_h; ++oy) {
                              const T fy = T(ay.frac[oy]);
                              T* r0 = gx + (b * H + ay.lo[oy]) * W * C;
                              T* r1 = gx + (b * H + ay.hi[oy]) * W * C;
                              for (std::size_t ox = 0; ox < out_w; ++ox) {
                                const T fx = T(ax.frac[ox]);
                                const T* g =
                                    self.grad.data() + ((b * out_h + oy) * out_w + ox) * C;
                                T* p00 = r0 + ax.lo[ox] * C;
                                T* p01 = r0 + ax.hi[ox] * C;
                                T* p10 = r1 + ax.lo[ox] * C;
                                T* p11 = r1 + ax.hi[ox] * C;
                                const T w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx,
                                        w10 = fy * (1 - fx), w11 = fy * fx;
                                for (std::size_t c = 0; c < C; ++c) {
                                  p00[c] += w00 * g[c];
                                  p01[c] += w01 * g[c];
                                  p10[c] += w10 * g[c];
                                  p11[c] += w11 * g[c];
                                }
                              }
                            }
                        });
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::size_t factor) {
  if (factor != 2 && factor != 4 && factor != 8) {
    throw ParameterError("upsample_bilinear: unsupported factor " + std::to_string(factor));
  }
  require_rank("upsample_bilinear", x.shape(), 4);
  return resize_bilinear(x, x.dim(1) * factor, x.dim(2) * factor);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps) {
  const std::size_t C = x.dim(-1);
  if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C) {
    throw DimensionError("layer_norm: gamma/beta must be (" + std::to_string(C) + ")");
  }
  const std::size_t rows = x.numel() / C;
  std::vector<T> out(x.numel()), xhat(x.numel()), rstd(rows);
  const T* xv = x.data().data();
  const T* gv = gamma.data().data();
  const T* bv = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = xv + r * C;
    T mu = 0;
    for (std::size_t c = 0; c < C; ++c) mu += src[c];
    mu /= T(C);
    T var = 0;
    for (std::size_t c = 0; c < C; ++c) var += (src[c] - mu) * (src[c] - mu);
    var /= T(C);
    const T rs = T(1) / std::sqrt(var + T(eps));
    rstd[r] = rs;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (src[c] - mu) * rs;
      xhat[r * C + c] = h;
      out[r * C + c] = h * gv[c] + bv[c];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {&x, &gamma, &beta},
                        [rows, C, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
                          const auto& gv = parent_values(self, 1);
                          const T* gy = self.grad.data();
                          if (T* gg = parent_grad(self, 1)) {
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < C; ++c)
                                gg[c] += gy[r * C + c] * xhat[r * C + c];
                          }
                          if (T* gb = parent_grad(self, 2)) {
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < C; ++c) gb[c] += gy[r * C + c];
                          }
                          T* gx = parent_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t r = 0; r < rows; ++r) {
                            T m1 = 0, m2 = 0;
                            for (std::size_t c = 0; c < C; ++c) {
                              const T d = gy[r * C + c] * gv[c];
                              m1 += d;
                              m2 += d * xhat[r * C + c];
                            }
                            m1 /= T(C);
                            m2 /= T(C);
                            for (std::size_t c = 0; c < C; ++c) {
                              const T d = gy[r * C + c] * gv[c];
                              gx[r * C + c] += rstd[r] * (d - m1 - xhat[r * C + c] * m2);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = T(0.5) * v * (T(1) + std::erf(v * T(kInvSqrt2)));
  }
  return make_result<T>(x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    T* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& xv = parent_values(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T v = xv[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * T(kInvSqrt2)));
      const T pdf = T(kInvSqrt2Pi) * std::exp(T(-0.5) * v * v);
      gx[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(T(0), x.data()[i]);
  return make_result<T>(x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    T* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& xv = parent_values(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > 0) gx[i] += self.grad[i];
  });
}

namespace {

// Pixel index map shared by to_regions / from_regions: entry (b, r, t) holds
// the flat (b, y, x) pixel index.
std::vector<std::size_t> region_pixel_map(std::size_t B, std::size_t H, std::size_t W,
                                          std::size_t S) {
  const std::size_t rh = H / S, rw = W / S;
  std::vector<std::size_t> map;
  map.reserve(B * H * W);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t ry = 0; ry < S; ++ry)
      for (std::size_t rx = 0; rx < S; ++rx)
        for (std::size_t ty = 0; ty < rh; ++ty)
          for (std::size_t tx = 0; tx < rw; ++tx)
            map.push_back((b * H + ry * rh + ty) * W + rx * rw + tx);
  return map;
}

void check_regions(const char* op, std::size_t H, std::size_t W, std::size_t S) {
  if (S == 0 || H % S != 0 || W % S != 0) {
    throw ParameterError(std::string(op) + ": extent " + std::to_string(H) + "x" +
                         std::to_string(W) + " not divisible into " + std::to_string(S) + "x" +
                         std::to_string(S) + " regions");
  }
}

}  // namespace

template <typename T>
Tensor<T> to_regions(const Tensor<T>& x, std::size_t regions) {
  require_rank("to_regions", x.shape(), 4);
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  check_regions("to_regions", H, W, regions);
  const std::size_t n = (H / regions) * (W / regions);
  return permute_rows(x, region_pixel_map(B, H, W, regions),
                      Shape{B, regions * regions, n, C}, C);
}

template <typename T>
Tensor<T> from_regions(const Tensor<T>& x, std::size_t regions, std::size_t height,
                       std::size_t width) {
  require_rank("from_regions", x.shape(), 4);
  check_regions("from_regions", height, width, regions);
  const std::size_t B = x.dim(0), C = x.dim(3);
  if (x.dim(1) != regions * regions || x.dim(2) * regions * regions != height * width) {
    throw DimensionError("from_regions: " + shape_str(x.shape()) + " is not a " +
                         std::to_string(regions) + "x" + std::to_string(regions) +
                         " partition of " + std::to_string(height) + "x" + std::to_string(width));
  }
  auto fwd = region_pixel_map(B, height, width, regions);
  std::vector<std::size_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
  return permute_rows(x, std::move(inv), Shape{B, height, width, C}, C);
}

#define DSSA_INSTANTIATE(T)                                                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sum(const Tensor<T>&);                                                     \
  template Tensor<T> mean(const Tensor<T>&);                                                    \
  template Tensor<T> mean_axis(const Tensor<T>&, long);                                         \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                \
  template Tensor<T> transpose_last(const Tensor<T>&);                                          \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, long);                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> softmax(const Tensor<T>&, long);                                           \
  template TopK<T> topk(const Tensor<T>&, std::size_t, long);                                   \
  template Tensor<T> gather(const Tensor<T>&, const IndexTensor&, long);                        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                            std::size_t, std::size_t);                                          \
  template Tensor<T> avg_pool_region(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> adaptive_avg_pool(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> resize_bilinear(const Tensor<T>&, std::size_t, std::size_t);               \
  template Tensor<T> upsample_bilinear(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);  \
  template Tensor<T> gelu(const Tensor<T>&);                                                    \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> to_regions(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> from_regions(const Tensor<T>&, std::size_t, std::size_t, std::size_t);

DSSA_INSTANTIATE(float)
DSSA_INSTANTIATE(double)
#undef DSSA_INSTANTIATE

}  // namespace dssa
