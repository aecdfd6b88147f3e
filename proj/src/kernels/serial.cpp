// Reference kernels: straightforward loop nests, one output element at a time.

#include <algorithm>
#include <limits>

#include "dssa/kernels.hpp"

namespace dssa::kernels::serial {

template <typename T>
void matmul(const MatmulGeometry& g, const T* a, const T* b, T* c) {
  for (std::size_t bt = 0; bt < g.batch; ++bt) {
    const T* ab = a + bt * g.m * g.k;
    const T* bb = g.shared_rhs ? b : b + bt * g.k * g.n;
    T* cb = c + bt * g.m * g.n;
    for (std::size_t i = 0; i < g.m; ++i) {
      for (std::size_t j = 0; j < g.n; ++j) {
        T acc = 0;
        for (std::size_t p = 0; p < g.k; ++p) acc += ab[i * g.k + p] * bb[p * g.n + j];
        cb[i * g.n + j] = acc;
      }
    }
  }
}

template <typename T>
void matmul_grad_a(const MatmulGeometry& g, const T* dc, const T* b, T* da) {
  for (std::size_t bt = 0; bt < g.batch; ++bt) {
    const T* dcb = dc + bt * g.m * g.n;
    const T* bb = g.shared_rhs ? b : b + bt * g.k * g.n;
    T* dab = da + bt * g.m * g.k;
    for (std::size_t i = 0; i < g.m; ++i) {
      for (std::size_t p = 0; p < g.k; ++p) {
        T acc = 0;
        for (std::size_t j = 0; j < g.n; ++j) acc += dcb[i * g.n + j] * bb[p * g.n + j];
        dab[i * g.k + p] += acc;
      }
    }
  }
}

template <typename T>
void matmul_grad_b(const MatmulGeometry& g, const T* a, const T* dc, T* db) {
  if (g.shared_rhs) {
    const std::size_t rows = g.batch * g.m;
    for (std::size_t p = 0; p < g.k; ++p) {
      for (std::size_t j = 0; j < g.n; ++j) {
        T acc = 0;
        for (std::size_t i = 0; i < rows; ++i) acc += a[i * g.k + p] * dc[i * g.n + j];
        db[p * g.n + j] += acc;
      }
    }
    return;
  }
  for (std::size_t bt = 0; bt < g.batch; ++bt) {
    const T* ab = a + bt * g.m * g.k;
    const T* dcb = dc + bt * g.m * g.n;
    T* dbb = db + bt * g.k * g.n;
    for (std::size_t p = 0; p < g.k; ++p) {
      for (std::size_t j = 0; j < g.n; ++j) {
        T acc = 0;
        for (std::size_t i = 0; i < g.m; ++i) acc += ab[i * g.k + p] * dcb[i * g.n + j];
        dbb[p * g.n + j] += acc;
      }
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const std::size_t ipg = g.in_per_group(), opg = g.out_per_group();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox)
        for (std::size_t co = 0; co < g.out_c; ++co) {
          const std::size_t grp = co / opg;
          T acc = bias ? bias[co] : T(0);
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const long iy = long(oy * g.stride + ky) - long(g.pad);
            if (iy < 0 || iy >= long(g.in_h)) continue;
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const long ix = long(ox * g.stride + kx) - long(g.pad);
              if (ix < 0 || ix >= long(g.in_w)) continue;
              const T* px = x + ((b * g.in_h + iy) * g.in_w + ix) * g.in_c + grp * ipg;
              const T* wk = w + (ky * g.kw + kx) * ipg * g.out_c;
              for (std::size_t ci = 0; ci < ipg; ++ci) acc += px[ci] * wk[ci * g.out_c + co];
            }
          }
          y[((b * g.out_h + oy) * g.out_w + ox) * g.out_c + co] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dy, const T* w, T* dx) {
  const std::size_t ipg = g.in_per_group(), opg = g.out_per_group();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t iy = 0; iy < g.in_h; ++iy)
      for (std::size_t ix = 0; ix < g.in_w; ++ix)
        for (std::size_t c = 0; c < g.in_c; ++c) {
          const std::size_t grp = c / ipg, ci = c % ipg;
          T acc = 0;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const long ty = long(iy + g.pad) - long(ky);
            if (ty < 0 || ty % long(g.stride) != 0) continue;
            const std::size_t oy = std::size_t(ty) / g.stride;
            if (oy >= g.out_h) continue;
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const long tx = long(ix + g.pad) - long(kx);
              if (tx < 0 || tx % long(g.stride) != 0) continue;
              const std::size_t ox = std::size_t(tx) / g.stride;
              if (ox >= g.out_w) continue;
              const T* pdy = dy + ((b * g.out_h + oy) * g.out_w + ox) * g.out_c;
              const T* wk = w + ((ky * g.kw + kx) * ipg + ci) * g.out_c;
              for (std::size_t o = grp * opg; o < (grp + 1) * opg; ++o) acc += pdy[o] * wk[o];
            }
          }
          dx[((b * g.in_h + iy) * g.in_w + ix) * g.in_c + c] += acc;
        }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* dbias) {
  const std::size_t ipg = g.in_per_group(), opg = g.out_per_group();
  for (std::size_t ky = 0; ky < g.kh; ++ky)
    for (std::size_t kx = 0; kx < g.kw; ++kx)
      for (std::size_t ci = 0; ci < ipg; ++ci)
        for (std::size_t co = 0; co < g.out_c; ++co) {
          const std::size_t c = (co / opg) * ipg + ci;
          T acc = 0;
          for (std::size_t b = 0; b < g.batch; ++b)
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long iy = long(oy * g.stride + ky) - long(g.pad);
              if (iy < 0 || iy >= long(g.in_h)) continue;
              for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const long ix = long(ox * g.stride + kx) - long(g.pad);
                if (ix < 0 || ix >= long(g.in_w)) continue;
                acc += x[((b * g.in_h + iy) * g.in_w + ix) * g.in_c + c] *
                       dy[((b * g.out_h + oy) * g.out_w + ox) * g.out_c + co];
              }
            }
          dw[((ky * g.kw + kx) * ipg + ci) * g.out_c + co] += acc;
        }
  if (dbias) {
    for (std::size_t co = 0; co < g.out_c; ++co) {
      T acc = 0;
      for (std::size_t p = 0; p < g.batch * g.out_h * g.out_w; ++p) acc += dy[p * g.out_c + co];
      dbias[co] += acc;
    }
  }
}

void min_sq_distances(const GridPoint* from, std::size_t n_from, const GridPoint* to,
                      std::size_t n_to, std::int64_t* out) {
  for (std::size_t i = 0; i < n_from; ++i) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (std::size_t j = 0; j < n_to; ++j) {
      const std::int64_t dx = from[i].x - to[j].x, dy = from[i].y - to[j].y;
      best = std::min(best, dx * dx + dy * dy);
    }
    out[i] = best;
  }
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

}  // namespace dssa::kernels::serial
