#include <doctest.h>

#include "dssa/blocks.hpp"
#include "dssa/oracle.hpp"
#include "support.hpp"

using namespace dssa;
using testing::random_tensor;

namespace {

DssaConfig block_cfg(std::size_t channels, std::size_t size) {
  return DssaConfig::for_feature_map(channels, size, size, 4, 4, 0.5, 8);
}

template <typename T>
void zero_all(const ParamList<T>& params) {
  for (const auto& p : params) {
    Tensor<T> t = p.tensor;
    for (auto& v : t.data()) v = T(0);
  }
}

bool constant_interior(const Tensor<double>& y, std::size_t border, double tol) {
  const std::size_t H = y.dim(1), W = y.dim(2), C = y.dim(3);
  for (std::size_t c = 0; c < C; ++c) {
    const double ref = y.data()[((border * W) + border) * C + c];
    for (std::size_t i = border; i + border < H; ++i)
      for (std::size_t j = border; j + border < W; ++j) {
        if (std::abs(y.data()[(i * W + j) * C + c] - ref) > tol) return false;
      }
  }
  return true;
}

}  // namespace

TEST_CASE("block with every weight zeroed is the identity") {
  Rng rng(1);
  auto p = BlockParams<double>::make(16, 3, rng);
  ParamList<double> params;
  p.collect("b", params);
  zero_all(params);
  std::mt19937_64 gen(2);
  const auto z = random_tensor({2, 8, 8, 16}, gen, -1, 1, false);
  CHECK(testing::values(dssa_block(z, p, block_cfg(16, 8))) == testing::values(z));
}

TEST_CASE("block preserves shape") {
  Rng rng(3);
  auto p = BlockParams<float>::make(96, 3, rng);
  const Tensor<float> z(Shape{2, 32, 32, 96}, 0.1f);
  NoGradGuard g;
  CHECK(dssa_block(z, p, DssaConfig::for_feature_map(96, 32, 32, 8, 4, 0.125, 32)).shape() ==
        z.shape());
}

TEST_CASE("block parameter count matches the closed form and a hand count") {
  Rng rng(4);
  for (auto [c, r] : {std::pair{16ul, 3ul}, std::pair{96ul, 3ul}, std::pair{24ul, 2ul}}) {
    auto p = BlockParams<float>::make(c, r, rng);
    ParamList<float> params;
    p.collect("b", params);
    std::size_t total = 0;
    for (const auto& t : params) total += t.tensor.numel();
    CHECK(total == BlockParams<float>::parameter_count(c, r));
    CHECK(total == (3 + 2 * r) * c * c + (41 + r) * c);
  }
  // C = 96, r = 3: 9 * 9216 + 44 * 96.
  CHECK(BlockParams<float>::parameter_count(96, 3) == 87168);
}

TEST_CASE("finite differences through a block") {
  const auto r = check_block_gradients(block_cfg(16, 8), 8, 5);
  CHECK(r.worst_relative_error < 1e-3);
}

TEST_CASE("patch embedding: extents, linearity and overlap") {
  Rng rng(6);
  auto p = PatchEmbedParams<double>::make(3, 16, rng);
  std::mt19937_64 gen(7);
  NoGradGuard g;
  const auto x = random_tensor({1, 64, 64, 3}, gen, -1, 1, false);
  const auto y = patch_embed(x, p);
  CHECK(y.shape() == Shape{1, 16, 16, 16});

  ParamList<double> params;
  p.collect("e", params);
  for (const auto& t : params) {
    if (t.name.find("bias") != std::string::npos || t.name.find("beta") != std::string::npos) {
      Tensor<double> b = t.tensor;
      for (auto& v : b.data()) v = 0;
    }
  }
  const auto zero = patch_embed(Tensor<double>(Shape{1, 32, 32, 3}, 0.0), p);
  for (double v : zero.data()) CHECK(v == 0.0);

  // One input pixel reaches more than one output pixel.
  const auto base = patch_embed(x, p);
  auto bumped = Tensor<double>(x.shape(), testing::values(x));
  bumped.data()[(30 * 64 + 30) * 3] += 1.0;
  const auto moved = patch_embed(bumped, p);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < 16 * 16; ++i) {
    bool any = false;
    for (std::size_t c = 0; c < 16; ++c) any |= moved.data()[i * 16 + c] != base.data()[i * 16 + c];
    changed += any;
  }
  CHECK(changed > 1);

  CHECK_THROWS_AS(patch_embed(Tensor<double>(Shape{1, 48, 64, 3}), p), ParameterError);
}

TEST_CASE("patch merging halves extents and doubles widths") {
  Rng rng(8);
  NoGradGuard g;
  for (std::size_t c : {96, 192, 384}) {
    auto p = PatchMergeParams<float>::make(c, 2 * c, rng);
    CHECK(patch_merge(Tensor<float>(Shape{1, 4, 4, c}, 0.5f), p).shape() == Shape{1, 2, 2, 2 * c});
  }
  auto p = PatchMergeParams<double>::make(8, 16, rng);
  CHECK(patch_merge(Tensor<double>(Shape{1, 64, 64, 8}), p).shape() == Shape{1, 32, 32, 16});
  CHECK(constant_interior(patch_merge(Tensor<double>(Shape{1, 16, 16, 8}, 0.7), p), 1, 1e-12));
  CHECK_THROWS_AS(patch_merge(Tensor<double>(Shape{1, 15, 16, 8}), p), ParameterError);
}

TEST_CASE("pyramid pooling: extents, constant input and the single-bin branch") {
  Rng rng(9);
  NoGradGuard g;
  auto big = PpmParams<float>::make(768, 64, {1, 2, 3, 6}, rng);
  CHECK(ppm(Tensor<float>(Shape{1, 8, 8, 768}, 0.1f), big).shape() == Shape{1, 8, 8, 64});

  auto p = PpmParams<double>::make(8, 4, {1, 2, 3, 6}, rng);
  CHECK(constant_interior(ppm(Tensor<double>(Shape{2, 12, 12, 8}, -0.3), p), 1, 1e-12));
  CHECK_THROWS_AS(ppm(Tensor<double>(Shape{1, 4, 4, 8}), p), ParameterError);

  // Branch for bin 1: GELU(W^T mean(x) + b), broadcast everywhere.
  std::mt19937_64 gen(10);
  const auto x = random_tensor({1, 6, 6, 8}, gen, -1, 1, false);
  const auto branch = resize_bilinear(gelu(p.branches[0](adaptive_avg_pool(x, 1))), 6, 6);
  std::vector<double> mean(8, 0.0);
  for (std::size_t i = 0; i < 36; ++i)
    for (std::size_t c = 0; c < 8; ++c) mean[c] += x.data()[i * 8 + c] / 36.0;
  for (std::size_t o = 0; o < 4; ++o) {
    double pre = p.branches[0].bias.data()[o];
    for (std::size_t c = 0; c < 8; ++c) pre += mean[c] * p.branches[0].weight.data()[c * 4 + o];
    const double expected = 0.5 * pre * (1 + std::erf(pre / std::sqrt(2.0)));
    for (std::size_t i = 0; i < 36; ++i) {
      CHECK(branch.data()[i * 4 + o] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}
