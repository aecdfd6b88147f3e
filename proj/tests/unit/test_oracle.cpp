#include <doctest.h>

#include <cmath>

#include "dssa/ops.hpp"
#include "dssa/oracle.hpp"
#include "support.hpp"

using namespace dssa;

namespace {

// Channels [from, from + width) of a (B, N, C) tensor.
Tensor<double> head_slice(const Tensor<double>& x, std::size_t from, std::size_t width) {
  const std::size_t rows = x.dim(0) * x.dim(1), c = x.dim(2);
  std::vector<double> out;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j) out.push_back(x.data()[r * c + from + j]);
  return Tensor<double>(Shape{x.dim(0), x.dim(1), width}, out);
}

}  // namespace

TEST_CASE("dense attention on hand cases") {
  std::mt19937_64 rng(1);
  const auto v = testing::random_tensor({1, 5, 4}, rng, -1, 1, false);
  // Zero queries weight every key equally.
  const Tensor<double> zero(Shape{1, 5, 4}, 0.0);
  const auto y = dense_attention(zero, testing::random_tensor({1, 5, 4}, rng, -1, 1, false), v, 2);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0;
    for (std::size_t j = 0; j < 5; ++j) mean += v.data()[j * 4 + c] / 5;
    for (std::size_t i = 0; i < 5; ++i) CHECK(y.data()[i * 4 + c] == doctest::Approx(mean).epsilon(1e-12));
  }
  // Two keys, one head: weights softmax(q.k / sqrt(2)).
  const Tensor<double> q(Shape{1, 1, 2}, {1.0, 2.0}), k(Shape{1, 2, 2}, {1.0, 0.0, 0.0, 1.0}),
      vv(Shape{1, 2, 2}, {10.0, 0.0, 0.0, 20.0});
  const auto out = dense_attention(q, k, vv, 1);
  const double s0 = 1 / std::sqrt(2.0), s1 = 2 / std::sqrt(2.0);
  const double w0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
  CHECK(out.data()[0] == doctest::Approx(10 * w0).epsilon(1e-12));
  CHECK(out.data()[1] == doctest::Approx(20 * (1 - w0)).epsilon(1e-12));
}

TEST_CASE("dense attention matches tensor softmax attention") {
  std::mt19937_64 rng(2);
  const auto q = testing::random_tensor({2, 6, 8}, rng, -1, 1, false);
  const auto k = testing::random_tensor({2, 9, 8}, rng, -1, 1, false);
  const auto v = testing::random_tensor({2, 9, 8}, rng, -1, 1, false);
  const auto y = dense_attention(q, k, v, 2);
  for (std::size_t h = 0; h < 2; ++h) {
    const auto qh = head_slice(q, h * 4, 4), kh = head_slice(k, h * 4, 4), vh = head_slice(v, h * 4, 4);
    const auto w = softmax(scale(matmul(qh, transpose_last(kh)), 0.5), -1);
    const auto o = matmul(w, vh);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 4; ++c)
          CHECK(y.data()[(b * 6 + i) * 8 + h * 4 + c] ==
                doctest::Approx(o.data()[(b * 6 + i) * 4 + c]).epsilon(1e-12));
  }
}

TEST_CASE("gradient checker agrees on an analytic objective") {
  std::mt19937_64 rng(3);
  auto x = testing::random_tensor({3, 4}, rng);
  ParamList<double> params{{"x", x}};
  const auto r = grad_check([&] { return sum(mul(x, x)); }, params);
  CHECK(r.worst_relative_error < 1e-8);
  CHECK(r.coordinates == 10);
  GradCheckOptions all;
  all.coords_per_tensor = 100;
  CHECK(grad_check([&] { return sum(mul(x, x)); }, params, all).coordinates == 12);
}

TEST_CASE("attention cost grows with retained regions and pixels") {
  const auto base = DssaConfig::for_feature_map(96, 64, 64, 8, 4, 0.125, 32);
  auto more_k1 = DssaConfig::for_feature_map(96, 64, 64, 8, 8, 0.125, 32);
  auto more_lambda = DssaConfig::for_feature_map(96, 64, 64, 8, 4, 0.25, 32);
  CHECK(dssa_attention_macs(more_k1, 64, 64) > dssa_attention_macs(base, 64, 64));
  CHECK(dssa_attention_macs(more_lambda, 64, 64) > dssa_attention_macs(base, 64, 64));
}
