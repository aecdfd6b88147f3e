// OpenMP kernels. Loops are reordered so the innermost dimension is the
// contiguous channel / column axis; each parallel iteration owns a disjoint
// slice of the output.

#include <algorithm>
#include <limits>

#include "dssa/kernels.hpp"

namespace dssa::kernels::omp {

template <typename T>
void matmul(const MatmulGeometry& g, const T* a, const T* b, T* c) {
  const long rows = long(g.batch * g.m);
  const std::size_t k = g.k, n = g.n;
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t bt = std::size_t(r) / g.m;
    const T* arow = a + std::size_t(r) * k;
    const T* bb = g.shared_rhs ? b : b + bt * k * n;
    T* crow = c + std::size_t(r) * n;
    std::fill(crow, crow + n, T(0));
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = bb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void matmul_grad_a(const MatmulGeometry& g, const T* dc, const T* b, T* da) {
  const long rows = long(g.batch * g.m);
  const std::size_t k = g.k, n = g.n;
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t bt = std::size_t(r) / g.m;
    const T* dcrow = dc + std::size_t(r) * n;
    const T* bb = g.shared_rhs ? b : b + bt * k * n;
    T* darow = da + std::size_t(r) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = bb + p * n;
      T acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
      darow[p] += acc;
    }
  }
}

template <typename T>
void matmul_grad_b(const MatmulGeometry& g, const T* a, const T* dc, T* db) {
  const std::size_t k = g.k, n = g.n;
  if (g.shared_rhs) {
    const std::size_t rows = g.batch * g.m;
#pragma omp parallel for schedule(static)
    for (long p = 0; p < long(k); ++p) {
      T* dbrow = db + std::size_t(p) * n;
      for (std::size_t i = 0; i < rows; ++i) {
        const T av = a[i * k + std::size_t(p)];
        const T* dcrow = dc + i * n;
        for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
      }
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (long r = 0; r < long(g.batch * k); ++r) {
    const std::size_t bt = std::size_t(r) / k, p = std::size_t(r) % k;
    const T* ab = a + bt * g.m * k;
    const T* dcb = dc + bt * g.m * n;
    T* dbrow = db + bt * k * n + p * n;
    for (std::size_t i = 0; i < g.m; ++i) {
      const T av = ab[i * k + p];
      const T* dcrow = dcb + i * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const std::size_t ipg = g.in_per_group(), opg = g.out_per_group();
  const bool dw = g.depthwise();
#pragma omp parallel for schedule(static)
  for (long r = 0; r < long(g.batch * g.out_h); ++r) {
    const std::size_t b = std::size_t(r) / g.out_h, oy = std::size_t(r) % g.out_h;
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      T* out = y + ((b * g.out_h + oy) * g.out_w + ox) * g.out_c;
      if (bias) {
        std::copy(bias, bias + g.out_c, out);
      } else {
        std::fill(out, out + g.out_c, T(0));
      }
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const long iy = long(oy * g.stride + ky) - long(g.pad);
        if (iy < 0 || iy >= long(g.in_h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const long ix = long(ox * g.stride + kx) - long(g.pad);
          if (ix < 0 || ix >= long(g.in_w)) continue;
          const T* px = x + ((b * g.in_h + iy) * g.in_w + ix) * g.in_c;
          const T* wk = w + (ky * g.kw + kx) * ipg * g.out_c;
          if (dw) {
            for (std::size_t c = 0; c < g.out_c; ++c) out[c] += px[c] * wk[c];
            continue;
          }
          for (std::size_t grp = 0; grp < g.groups; ++grp) {
            T* og = out + grp * opg;
            for (std::size_t ci = 0; ci < ipg; ++ci) {
              const T xv = px[grp * ipg + ci];
              const T* wrow = wk + ci * g.out_c + grp * opg;
              for (std::size_t o = 0; o < opg; ++o) og[o] += xv * wrow[o];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dy, const T* w, T* dx) {
  const std::size_t ipg = g.in_per_group(), opg = g.out_per_group();
  const bool dw = g.depthwise();
#pragma omp parallel for schedule(static)
  for (long r = 0; r < long(g.batch * g.in_h); ++r) {
    const std::size_t b = std::size_t(r) / g.in_h, iy = std::size_t(r) % g.in_h;
    for (std::size_t ix = 0; ix < g.in_w; ++ix) {
      T* pdx = dx + ((b * g.in_h + iy) * g.in_w + ix) * g.in_c;
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
          const T* wk = w + (ky * g.kw + kx) * ipg * g.out_c;
          if (dw) {
            for (std::size_t c = 0; c < g.in_c; ++c) pdx[c] += pdy[c] * wk[c];
            continue;
          }
          for (std::size_t grp = 0; grp < g.groups; ++grp) {
            const T* dyg = pdy + grp * opg;
            for (std::size_t ci = 0; ci < ipg; ++ci) {
              const T* wrow = wk + ci * g.out_c + grp * opg;
              T acc = 0;
              for (std::size_t o = 0; o < opg; ++o) acc += dyg[o] * wrow[o];
              pdx[grp * ipg + ci] += acc;
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* dbias) {
  const std::size_t ipg = g.in_per_group(), opg = g.out_per_group();
  const long rows = long(g.kh * g.kw * ipg);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t ci = std::size_t(r) % ipg;
    const std::size_t kk = std::size_t(r) / ipg;
    const std::size_t ky = kk / g.kw, kx = kk % g.kw;
    T* dwrow = dw + std::size_t(r) * g.out_c;
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        const long iy = long(oy * g.stride + ky) - long(g.pad);
        if (iy < 0 || iy >= long(g.in_h)) continue;
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const long ix = long(ox * g.stride + kx) - long(g.pad);
          if (ix < 0 || ix >= long(g.in_w)) continue;
          const T* px = x + ((b * g.in_h + iy) * g.in_w + ix) * g.in_c;
          const T* pdy = dy + ((b * g.out_h + oy) * g.out_w + ox) * g.out_c;
          if (ipg == 1 && opg == 1) {
            for (std::size_t c = 0; c < g.out_c; ++c) dwrow[c] += px[c] * pdy[c];
            continue;
          }
          for (std::size_t grp = 0; grp < g.groups; ++grp) {
            const T xv = px[grp * ipg + ci];
            T* dwg = dwrow + grp * opg;
            const T* dyg = pdy + grp * opg;
            for (std::size_t o = 0; o < opg; ++o) dwg[o] += xv * dyg[o];
          }
        }
      }
  }
  if (dbias) {
    const std::size_t pixels = g.batch * g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
    for (long co = 0; co < long(g.out_c); ++co) {
      T acc = 0;
      for (std::size_t p = 0; p < pixels; ++p) acc += dy[p * g.out_c + std::size_t(co)];
      dbias[co] += acc;
    }
  }
}

void min_sq_distances(const GridPoint* from, std::size_t n_from, const GridPoint* to,
                      std::size_t n_to, std::int64_t* out) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(n_from); ++i) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    const std::int64_t fx = from[i].x, fy = from[i].y;
    for (std::size_t j = 0; j < n_to; ++j) {
      const std::int64_t dx = fx - to[j].x, dy = fy - to[j].y;
      const std::int64_t d = dx * dx + dy * dy;
      best = d < best ? d : best;
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

}  // namespace dssa::kernels::omp
