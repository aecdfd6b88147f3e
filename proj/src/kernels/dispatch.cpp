#include <atomic>
#include <string>

#include "dssa/errors.hpp"
#include "dssa/kernels.hpp"

namespace dssa::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};
std::atomic<std::uint64_t> g_macs{0};
}  // namespace

ConvGeometry ConvGeometry::make(std::size_t batch, std::size_t in_h, std::size_t in_w,
                                std::size_t in_c, std::size_t out_c, std::size_t kh,
                                std::size_t kw, std::size_t stride, std::size_t pad,
                                std::size_t groups) {
  if (groups == 0 || in_c % groups != 0 || out_c % groups != 0) {
    throw ParameterError("conv2d: channels in=" + std::to_string(in_c) +
                         " out=" + std::to_string(out_c) + " not divisible by groups=" +
                         std::to_string(groups));
  }
  if (stride == 0) throw ParameterError("conv2d: stride must be positive");
  if (in_h + 2 * pad < kh || in_w + 2 * pad < kw) {
    throw ParameterError("conv2d: input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                         " smaller than kernel after padding");
  }
  ConvGeometry g;
  g.batch = batch;
  g.in_h = in_h;
  g.in_w = in_w;
  g.in_c = in_c;
  g.out_c = out_c;
  g.kh = kh;
  g.kw = kw;
  g.stride = stride;
  g.pad = pad;
  g.groups = groups;
  g.out_h = (in_h + 2 * pad - kh) / stride + 1;
  g.out_w = (in_w + 2 * pad - kw) / stride + 1;
  return g;
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

void reset_mac_count() { g_macs.store(0); }
std::uint64_t mac_count() { return g_macs.load(); }

template <typename T>
void matmul(const MatmulGeometry& g, const T* a, const T* b, T* c) {
  g_macs.fetch_add(g.macs(), std::memory_order_relaxed);
  if (backend() == Backend::Serial) return serial::matmul(g, a, b, c);
  omp::matmul(g, a, b, c);
}

template <typename T>
void matmul_grad_a(const MatmulGeometry& g, const T* dc, const T* b, T* da) {
  if (backend() == Backend::Serial) return serial::matmul_grad_a(g, dc, b, da);
  omp::matmul_grad_a(g, dc, b, da);
}

template <typename T>
void matmul_grad_b(const MatmulGeometry& g, const T* a, const T* dc, T* db) {
  if (backend() == Backend::Serial) return serial::matmul_grad_b(g, a, dc, db);
  omp::matmul_grad_b(g, a, dc, db);
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  g_macs.fetch_add(g.macs(), std::memory_order_relaxed);
  if (backend() == Backend::Serial) return serial::conv2d_forward(g, x, w, bias, y);
  omp::conv2d_forward(g, x, w, bias, y);
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dy, const T* w, T* dx) {
  if (backend() == Backend::Serial) return serial::conv2d_backward_input(g, dy, w, dx);
  omp::conv2d_backward_input(g, dy, w, dx);
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* dbias) {
  if (backend() == Backend::Serial) return serial::conv2d_backward_weight(g, x, dy, dw, dbias);
  omp::conv2d_backward_weight(g, x, dy, dw, dbias);
}

void min_sq_distances(const GridPoint* from, std::size_t n_from, const GridPoint* to,
                      std::size_t n_to, std::int64_t* out) {
  if (backend() == Backend::Serial) return serial::min_sq_distances(from, n_from, to, n_to, out);
  omp::min_sq_distances(from, n_from, to, n_to, out);
}

#define DSSA_INSTANTIATE(T)                                                              \
  template void matmul<T>(const MatmulGeometry&, const T*, const T*, T*);                \
  template void matmul_grad_a<T>(const MatmulGeometry&, const T*, const T*, T*);         \
  template void matmul_grad_b<T>(const MatmulGeometry&, const T*, const T*, T*);         \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*); \
  template void conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);   \
  template void conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);

DSSA_INSTANTIATE(float)
DSSA_INSTANTIATE(double)
#undef DSSA_INSTANTIATE

}  // namespace dssa::kernels
