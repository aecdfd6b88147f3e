#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dssa/kernels.hpp"
#include "dssa/ops.hpp"
#include "support.hpp"

using namespace dssa;
using testing::max_grad_error;
using testing::random_tensor;

namespace {

Tensor<double> constant(Shape s, std::vector<double> v) { return Tensor<double>(s, v); }

// Direct seven-loop cross-correlation used as the conv oracle.
std::vector<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w,
                               const Tensor<double>& b, std::size_t stride, std::size_t pad,
                               std::size_t groups, std::size_t& oh, std::size_t& ow) {
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t K = w.dim(0), cin = w.dim(2), O = w.dim(3);
  oh = (H + 2 * pad - K) / stride + 1;
  ow = (W + 2 * pad - K) / stride + 1;
  std::vector<double> y(B * oh * ow * O, 0.0);
  const std::size_t opg = O / groups;
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        for (std::size_t o = 0; o < O; ++o) {
          double acc = b.defined() ? b.data()[o] : 0.0;
          const std::size_t g = o / opg;
          for (std::size_t ki = 0; ki < K; ++ki)
            for (std::size_t kj = 0; kj < K; ++kj) {
              const long yy = long(i * stride + ki) - long(pad);
              const long xx = long(j * stride + kj) - long(pad);
              if (yy < 0 || xx < 0 || yy >= long(H) || xx >= long(W)) continue;
              for (std::size_t c = 0; c < cin; ++c) {
                acc += x.data()[((n * H + yy) * W + xx) * C + g * cin + c] *
                       w.data()[((ki * K + kj) * cin + c) * O + o];
              }
            }
          y[((n * oh + i) * ow + j) * O + o] = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("elementwise ops and reductions") {
  auto a = constant({2, 2}, {1, 2, 3, 4});
  auto b = constant({2, 2}, {5, 6, 7, 8});
  CHECK(add(a, b).data()[3] == 12);
  CHECK(sub(a, b).data()[0] == -4);
  CHECK(mul(a, b).data()[2] == 21);
  CHECK(scale(a, 0.5).data()[1] == 1);
  CHECK(sum(a).item() == 10);
  CHECK(mean(a).item() == 2.5);
  auto m = mean_axis(a, 0);
  CHECK(m.shape() == Shape{2});
  CHECK(m.data()[0] == 2);
  CHECK(m.data()[1] == 3);
  CHECK_THROWS_AS(add(a, constant({4}, {1, 2, 3, 4})), DimensionError);
}

TEST_CASE("matmul matches a hand product and supports shared rhs") {
  auto a = constant({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = constant({3, 2}, {7, 8, 9, 10, 11, 12});
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.data()[0] == 58);
  CHECK(c.data()[1] == 64);
  CHECK(c.data()[2] == 139);
  CHECK(c.data()[3] == 154);
  auto batched = reshape(concat(std::vector<Tensor<double>>{a, a}, 0), Shape{2, 2, 3});
  auto cb = matmul(batched, b);
  CHECK(cb.shape() == Shape{2, 2, 2});
  CHECK(cb.data()[7] == 154);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  auto x = constant({2, 3}, {1000, 1001, 1002, -5, 0, 5});
  auto s = softmax(x, -1);
  for (int r = 0; r < 2; ++r) {
    double total = 0;
    for (int c = 0; c < 3; ++c) {
      CHECK(std::isfinite(s.data()[r * 3 + c]));
      total += s.data()[r * 3 + c];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(s.data()[2] == doctest::Approx(std::exp(2.0) / (1 + std::exp(1.0) + std::exp(2.0))));
}

TEST_CASE("topk orders descending and breaks ties toward lower index") {
  auto x = constant({1, 6}, {3, 7, 7, 1, 7, 0});
  auto t = topk(x, 4, -1);
  CHECK(t.indices.values == std::vector<std::size_t>{1, 2, 4, 0});
  CHECK(t.values.data()[3] == 3);
  CHECK_THROWS_AS(topk(x, 7, -1), ParameterError);
  CHECK_THROWS_AS(topk(x, 0, -1), ParameterError);
}

TEST_CASE("gather selects along an axis and rejects bad indices") {
  auto x = constant({2, 3, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  IndexTensor idx(Shape{2, 2}, {2, 0, 1, 1});
  auto g = gather(x, idx, 1);
  CHECK(g.shape() == Shape{2, 2, 2});
  CHECK(g.data()[0] == 4);
  CHECK(g.data()[2] == 0);
  CHECK(g.data()[4] == 8);
  CHECK(g.data()[6] == 8);
  IndexTensor shared(Shape{1}, {2});
  CHECK(gather(x, shared, 1).data()[2] == 10);
  CHECK_THROWS_AS(gather(x, IndexTensor(Shape{1}, {3}), 1), IndexError);
}

TEST_CASE("conv2d agrees with a direct loop oracle") {
  std::mt19937_64 rng(11);
  struct Case {
    std::size_t cin, cout, k, stride, pad, groups;
    bool bias;
  };
  for (const Case& c : {Case{3, 4, 3, 1, 1, 1, true}, Case{4, 6, 3, 2, 1, 2, false},
                        Case{5, 5, 5, 1, 2, 5, true}, Case{4, 2, 1, 1, 0, 1, true}}) {
    auto x = random_tensor({2, 7, 6, c.cin}, rng);
    auto w = random_tensor({c.k, c.k, c.cin / c.groups, c.cout}, rng);
    Tensor<double> b;
    if (c.bias) b = random_tensor({c.cout}, rng);
    std::size_t oh = 0, ow = 0;
    auto expected = naive_conv(x, w, b, c.stride, c.pad, c.groups, oh, ow);
    for (auto be : {kernels::Backend::Serial, kernels::Backend::Parallel}) {
      kernels::set_backend(be);
      auto y = conv2d(x, w, b, c.stride, c.pad, c.groups);
      REQUIRE(y.shape() == Shape{2, oh, ow, c.cout});
      for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(y.data()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
      }
    }
    kernels::set_backend(kernels::Backend::Parallel);
  }
}

TEST_CASE("bilinear resize uses half-pixel centers") {
  auto x = constant({1, 1, 2, 1}, {0, 1});
  auto y = resize_bilinear(x, 1, 4);
  std::vector<double> got(y.data().begin(), y.data().end());
  CHECK(got[0] == doctest::Approx(0.0));
  CHECK(got[1] == doctest::Approx(0.25));
  CHECK(got[2] == doctest::Approx(0.75));
  CHECK(got[3] == doctest::Approx(1.0));
  auto up = upsample_bilinear(constant({1, 2, 2, 1}, {1, 1, 1, 1}), 8);
  CHECK(up.shape() == Shape{1, 16, 16, 1});
  for (double v : up.data()) CHECK(v == doctest::Approx(1.0));
  CHECK_THROWS_AS(upsample_bilinear(x, 3), ParameterError);
}

TEST_CASE("adaptive pooling with one bin is the global mean") {
  std::mt19937_64 rng(3);
  auto x = random_tensor({2, 5, 7, 3}, rng);
  auto p = adaptive_avg_pool(x, 1);
  CHECK(p.shape() == Shape{2, 1, 1, 3});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < 35; ++i) s += x.data()[(n * 35 + i) * 3 + c];
      CHECK(p.data()[n * 3 + c] == doctest::Approx(s / 35));
    }
  CHECK_THROWS_AS(adaptive_avg_pool(x, 6), ParameterError);
}

TEST_CASE("layer norm, gelu and relu values") {
  auto x = constant({1, 4}, {1, 2, 3, 4});
  auto y = layer_norm(x, constant({4}, {1, 1, 1, 1}), constant({4}, {0, 0, 0, 0}));
  const double sd = std::sqrt(1.25 + kLayerNormEps);
  CHECK(y.data()[0] == doctest::Approx(-1.5 / sd));
  CHECK(y.data()[3] == doctest::Approx(1.5 / sd));
  auto g = gelu(constant({3}, {-1, 0, 1}));
  CHECK(g.data()[0] == doctest::Approx(-0.15865525393145707));
  CHECK(g.data()[1] == 0);
  CHECK(g.data()[2] == doctest::Approx(0.8413447460685429));
  CHECK(relu(constant({2}, {-2, 3})).data()[0] == 0);
}

TEST_CASE("region partition round-trips and orders tokens row-major") {
  std::vector<double> v(1 * 4 * 4 * 1);
  std::iota(v.begin(), v.end(), 0.0);
  auto x = constant({1, 4, 4, 1}, v);
  auto r = to_regions(x, 2);
  CHECK(r.shape() == Shape{1, 4, 4, 1});
  // region 1 is the top-right 2x2 block
  CHECK(std::vector<double>(r.data().begin() + 4, r.data().begin() + 8) ==
        std::vector<double>{2, 3, 6, 7});
  auto back = from_regions(r, 2, 4, 4);
  CHECK(std::vector<double>(back.data().begin(), back.data().end()) == v);
  auto pooled = avg_pool_region(x, 2);
  CHECK(pooled.data()[3] == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
  CHECK_THROWS(to_regions(x, 3));
}

TEST_CASE("autodiff gradients match central differences") {
  std::mt19937_64 rng(5);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 4, 5}, rng);
  auto w = random_tensor({4, 5}, rng);
  auto bias = random_tensor({5}, rng);
  auto gamma = random_tensor({4}, rng);
  auto beta = random_tensor({4}, rng);
  auto img = random_tensor({2, 6, 6, 4}, rng);
  auto cw = random_tensor({3, 3, 2, 6}, rng);
  auto cb = random_tensor({6}, rng);

  CHECK(max_grad_error([&] { return matmul(a, b); }, {a, b}) < 1e-6);
  CHECK(max_grad_error([&] { return linear(a, w, bias); }, {a, w, bias}) < 1e-6);
  CHECK(max_grad_error([&] { return softmax(a, -1); }, {a}) < 1e-6);
  CHECK(max_grad_error([&] { return softmax(a, 1); }, {a}) < 1e-6);
  CHECK(max_grad_error([&] { return layer_norm(a, gamma, beta); }, {a, gamma, beta}) < 1e-5);
  CHECK(max_grad_error([&] { return gelu(a); }, {a}) < 1e-6);
  CHECK(max_grad_error([&] { return mean_axis(a, 1); }, {a}) < 1e-6);
  CHECK(max_grad_error([&] { return permute(a, {2, 0, 1}); }, {a}) < 1e-6);
  CHECK(max_grad_error([&] { return topk(a, 2, -1).values; }, {a}) < 1e-6);
  CHECK(max_grad_error(
            [&] {
              return gather(a, IndexTensor(Shape{2, 4}, {0, 2, 2, 1, 1, 1, 0, 2}), 1);
            },
            {a}) < 1e-6);
  CHECK(max_grad_error([&] { return conv2d(img, cw, cb, 2, 1, 2); }, {img, cw, cb}) < 1e-6);
  CHECK(max_grad_error([&] { return adaptive_avg_pool(img, 4); }, {img}) < 1e-6);
  CHECK(max_grad_error([&] { return resize_bilinear(img, 9, 4); }, {img}) < 1e-6);
  CHECK(max_grad_error([&] { return upsample_bilinear(img, 2); }, {img}) < 1e-6);
  CHECK(max_grad_error([&] { return from_regions(to_regions(img, 3), 3, 6, 6); }, {img}) <
        1e-6);
  CHECK(max_grad_error(
            [&] {
              return concat(std::vector<Tensor<double>>{img, mul(img, img)}, -1);
            },
            {img}) < 1e-6);
}

TEST_CASE("backward requires a scalar and no-grad mode builds no graph") {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3}, rng);
  CHECK_THROWS_AS(scale(a, 2.0).backward(), ContractError);
  NoGradGuard guard;
  auto y = scale(a, 2.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("shared subgraphs accumulate gradient once per use") {
  auto x = Tensor<double>(Shape{1}, std::vector<double>{3.0}, true);
  auto y = mul(x, x);       // x^2
  auto z = add(y, mul(y, x));  // x^2 + x^3
  sum(z).backward();
  CHECK(x.grad()[0] == doctest::Approx(2 * 3 + 3 * 9));
}
