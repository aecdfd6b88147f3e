#pragma once

// Compute kernels behind the differentiable ops.
//
// Every kernel exists twice: kernels::serial holds plain loop nests kept as
// the reference, kernels::omp holds the cache-friendly OpenMP versions used
// by default. Parallel loops only split over independent output elements, so
// each output is reduced in a fixed order regardless of thread count.
//
// Layouts: activations NHWC, conv weights HWIO (kh, kw, in_c / groups, out_c),
// matrices row-major.

#include <cstddef>
#include <cstdint>

namespace dssa::kernels {

struct MatmulGeometry {
  std::size_t batch = 1;
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  bool shared_rhs = false;  // one (k x n) right operand for every batch entry

  std::uint64_t macs() const { return std::uint64_t(batch) * m * k * n; }
};

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t out_h = 0, out_w = 0, out_c = 0;
  std::size_t kh = 1, kw = 1;
  std::size_t stride = 1, pad = 0, groups = 1;

  // Fills out_h/out_w; throws ParameterError on inconsistent arguments.
  static ConvGeometry make(std::size_t batch, std::size_t in_h, std::size_t in_w,
                           std::size_t in_c, std::size_t out_c, std::size_t kh, std::size_t kw,
                           std::size_t stride, std::size_t pad, std::size_t groups);

  std::size_t in_per_group() const { return in_c / groups; }
  std::size_t out_per_group() const { return out_c / groups; }
  bool depthwise() const { return groups == in_c && in_c == out_c; }
  std::uint64_t macs() const {
    return std::uint64_t(batch) * out_h * out_w * out_c * kh * kw * in_per_group();
  }
};

struct GridPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

enum class Backend { Serial, Parallel };

void set_backend(Backend b);
Backend backend();

// Multiply-accumulates issued by forward matmul / conv calls since the last
// reset. Backward kernels are not counted.
void reset_mac_count();
std::uint64_t mac_count();

#define DSSA_KERNEL_DECLS                                                                  \
  template <typename T>                                                                    \
  void matmul(const MatmulGeometry& g, const T* a, const T* b, T* c);                      \
  template <typename T>                                                                    \
  void matmul_grad_a(const MatmulGeometry& g, const T* dc, const T* b, T* da);             \
  template <typename T>                                                                    \
  void matmul_grad_b(const MatmulGeometry& g, const T* a, const T* dc, T* db);             \
  template <typename T>                                                                    \
  void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y); \
  template <typename T>                                                                    \
  void conv2d_backward_input(const ConvGeometry& g, const T* dy, const T* w, T* dx);       \
  template <typename T>                                                                    \
  void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw,       \
                              T* dbias);                                                   \
  void min_sq_distances(const GridPoint* from, std::size_t n_from, const GridPoint* to,    \
                        std::size_t n_to, std::int64_t* out);

// c = a * b.  Gradients accumulate (+=) into da / db / dx / dw / dbias.
// dbias may be null.  min_sq_distances writes, for each `from` point, the
// squared distance to its nearest `to` point.
DSSA_KERNEL_DECLS

namespace serial {
DSSA_KERNEL_DECLS
}

namespace omp {
DSSA_KERNEL_DECLS
}

#undef DSSA_KERNEL_DECLS

}  // namespace dssa::kernels
