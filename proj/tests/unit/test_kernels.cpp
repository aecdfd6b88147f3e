#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "dssa/kernels.hpp"

using namespace dssa::kernels;

namespace {

template <typename T>
std::vector<T> random_values(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = T(d(rng));
  return v;
}

ConvGeometry random_conv(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 1000);
  const std::size_t k = 1 + 2 * (pick(rng) % 3);
  const std::size_t stride = 1 + pick(rng) % 2;
  const std::size_t pad = k / 2;
  std::size_t groups = 1, in_c = 1 + pick(rng) % 6, out_c = 1 + pick(rng) % 6;
  switch (pick(rng) % 3) {
    case 0:
      break;
    case 1:  // depth-wise
      out_c = in_c;
      groups = in_c;
      break;
    default:  // grouped
      groups = 2;
      in_c = 2 * (1 + pick(rng) % 3);
      out_c = 2 * (1 + pick(rng) % 3);
  }
  const std::size_t h = k + pick(rng) % 9, w = k + pick(rng) % 9;
  return ConvGeometry::make(1 + pick(rng) % 2, h, w, in_c, out_c, k, k, stride, pad, groups);
}

template <typename T>
bool close(const std::vector<T>& a, const std::vector<T>& b) {
  const double tol = std::is_same_v<T, float> ? 1e-5 : 1e-12;
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(double(a[i]) - double(b[i])) > tol * (1 + std::abs(double(a[i])))) return false;
  }
  return true;
}

// Runs `kernel` with 1 and with 4 threads; the outputs must match bitwise.
template <typename T>
bool thread_invariant(const std::function<std::vector<T>()>& kernel) {
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = kernel();
  omp_set_num_threads(4);
  const auto four = kernel();
  omp_set_num_threads(saved);
  return one == four;
}

}  // namespace

TEST_CASE_TEMPLATE("matmul kernels: parallel matches serial and is thread-count invariant", T, float, double) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 37);
  for (int trial = 0; trial < 40; ++trial) {
    MatmulGeometry g{1 + trial % 3, dim(rng), dim(rng), dim(rng), trial % 2 == 0};
    const auto a = random_values<T>(g.batch * g.m * g.k, rng);
    const auto b = random_values<T>((g.shared_rhs ? 1 : g.batch) * g.k * g.n, rng);
    const auto dc = random_values<T>(g.batch * g.m * g.n, rng);
    std::vector<T> c1(g.batch * g.m * g.n), c2(c1.size());
    serial::matmul(g, a.data(), b.data(), c1.data());
    omp::matmul(g, a.data(), b.data(), c2.data());
    CHECK(close(c1, c2));
    std::vector<T> da1(a.size(), T(0.5)), da2(da1), db1(b.size(), T(0.25)), db2(db1);
    serial::matmul_grad_a(g, dc.data(), b.data(), da1.data());
    omp::matmul_grad_a(g, dc.data(), b.data(), da2.data());
    serial::matmul_grad_b(g, a.data(), dc.data(), db1.data());
    omp::matmul_grad_b(g, a.data(), dc.data(), db2.data());
    CHECK(close(da1, da2));
    CHECK(close(db1, db2));
    CHECK(thread_invariant<T>([&] {
      std::vector<T> c(c1.size()), da(a.size(), T(0)), db(b.size(), T(0));
      omp::matmul(g, a.data(), b.data(), c.data());
      omp::matmul_grad_a(g, dc.data(), b.data(), da.data());
      omp::matmul_grad_b(g, a.data(), dc.data(), db.data());
      c.insert(c.end(), da.begin(), da.end());
      c.insert(c.end(), db.begin(), db.end());
      return c;
    }));
  }
}

TEST_CASE("matmul matches a triple loop") {
  std::mt19937_64 rng(3);
  MatmulGeometry g{2, 5, 7, 3, false};
  const auto a = random_values<double>(2 * 5 * 7, rng), b = random_values<double>(2 * 7 * 3, rng);
  std::vector<double> c(2 * 5 * 3);
  set_backend(Backend::Parallel);
  matmul(g, a.data(), b.data(), c.data());
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < 7; ++k) acc += a[(n * 5 + i) * 7 + k] * b[(n * 7 + k) * 3 + j];
        CHECK(c[(n * 5 + i) * 3 + j] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE_TEMPLATE("conv kernels: parallel matches serial and is thread-count invariant", T, float, double) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const ConvGeometry g = random_conv(rng);
    const auto x = random_values<T>(g.batch * g.in_h * g.in_w * g.in_c, rng);
    const auto w = random_values<T>(g.kh * g.kw * g.in_per_group() * g.out_c, rng);
    const auto bias = random_values<T>(g.out_c, rng);
    const auto dy = random_values<T>(g.batch * g.out_h * g.out_w * g.out_c, rng);
    std::vector<T> y1(dy.size()), y2(dy.size());
    serial::conv2d_forward(g, x.data(), w.data(), bias.data(), y1.data());
    omp::conv2d_forward(g, x.data(), w.data(), bias.data(), y2.data());
    CHECK(close(y1, y2));
    std::vector<T> dx1(x.size(), T(0)), dx2(dx1), dw1(w.size(), T(0)), dw2(dw1);
    std::vector<T> db1(g.out_c, T(0)), db2(db1);
    serial::conv2d_backward_input(g, dy.data(), w.data(), dx1.data());
    omp::conv2d_backward_input(g, dy.data(), w.data(), dx2.data());
    serial::conv2d_backward_weight(g, x.data(), dy.data(), dw1.data(), db1.data());
    omp::conv2d_backward_weight(g, x.data(), dy.data(), dw2.data(), db2.data());
    CHECK(close(dx1, dx2));
    CHECK(close(dw1, dw2));
    CHECK(close(db1, db2));
    CHECK(thread_invariant<T>([&] {
      std::vector<T> y(dy.size()), dx(x.size(), T(0)), dw(w.size(), T(0)), db(g.out_c, T(0));
      omp::conv2d_forward(g, x.data(), w.data(), bias.data(), y.data());
      omp::conv2d_backward_input(g, dy.data(), w.data(), dx.data());
      omp::conv2d_backward_weight(g, x.data(), dy.data(), dw.data(), db.data());
      for (const auto* part : {&dx, &dw, &db}) y.insert(y.end(), part->begin(), part->end());
      return y;
    }));
  }
}

TEST_CASE("conv geometry rejects inconsistent arguments") {
  CHECK_THROWS(ConvGeometry::make(1, 8, 8, 3, 4, 3, 3, 1, 1, 2));
  CHECK_THROWS(ConvGeometry::make(1, 2, 2, 3, 3, 5, 5, 1, 0, 1));
  const auto g = ConvGeometry::make(1, 9, 9, 4, 8, 3, 3, 2, 1, 1);
  CHECK(g.out_h == 5);
  CHECK(g.out_w == 5);
}

TEST_CASE("nearest squared distances equal a brute-force scan on both backends") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> coord(-40, 40);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GridPoint> from(1 + trial * 7), to(1 + (trial * 13) % 50);
    for (auto& p : from) p = {coord(rng), coord(rng)};
    for (auto& p : to) p = {coord(rng), coord(rng)};
    std::vector<std::int64_t> a(from.size()), b(from.size());
    serial::min_sq_distances(from.data(), from.size(), to.data(), to.size(), a.data());
    omp::min_sq_distances(from.data(), from.size(), to.data(), to.size(), b.data());
    CHECK(a == b);
    for (std::size_t i = 0; i < from.size(); ++i) {
      std::int64_t best = std::numeric_limits<std::int64_t>::max();
      for (const auto& q : to) {
        const std::int64_t dx = from[i].x - q.x, dy = from[i].y - q.y;
        best = std::min(best, dx * dx + dy * dy);
      }
      CHECK(a[i] == best);
    }
  }
}

TEST_CASE("backend switch and mac counter") {
  set_backend(Backend::Serial);
  CHECK(backend() == Backend::Serial);
  reset_mac_count();
  MatmulGeometry g{2, 3, 4, 5, false};
  std::vector<float> a(24, 1.0f), b(40, 1.0f), c(30);
  matmul(g, a.data(), b.data(), c.data());
  CHECK(mac_count() == 120);
  CHECK(c[0] == 4.0f);
  set_backend(Backend::Parallel);
  CHECK(backend() == Backend::Parallel);
}
