#include <doctest.h>

#include <chrono>

#include "dssa/kernels.hpp"
#include "dssa/model.hpp"
#include "dssa/oracle.hpp"
#include "support.hpp"

using namespace dssa;

namespace {

Tensor<float> random_input(std::size_t batch, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  return testing::to_float(testing::random_tensor({batch, size, size, 3}, gen, -1, 1, false));
}

}  // namespace

TEST_CASE("config defaults and validation") {
  ModelConfig c;
  CHECK(c.depths == std::vector<std::size_t>{2, 2, 8, 2});
  CHECK(c.resolved_decoder_depths() == std::vector<std::size_t>{2, 2, 8, 2});
  CHECK(c.k1_schedule == std::vector<std::size_t>{1, 4, 16, 64});
  CHECK(c.lambda == 0.125);
  CHECK(c.decoder_width == 64);
  CHECK_NOTHROW(c.validate());
  c.channels = {96, 192, 384};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.skips = {2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.channels = {96, 190, 384, 768};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ModelConfig::skips_for_count(0).empty());
  CHECK(ModelConfig::skips_for_count(2) == std::set<std::size_t>{4, 8});
  CHECK(ModelConfig::skips_for_count(3) == std::set<std::size_t>{4, 8, 16});
  CHECK_THROWS(ModelConfig::skips_for_count(4));
}

TEST_CASE("resolution ladder on the tiny network") {
  DssauNet<float> net(ModelConfig::tiny(), 1);
  NoGradGuard g;
  for (std::size_t size : {64, 96}) {
    auto s = net.encode(random_input(1, size, 2));
    net.decode(s);
    const std::size_t q = size / 4;
    CHECK(s[1].shape() == Shape{1, q, q, 24});
    CHECK(s[2].shape() == Shape{1, q / 2, q / 2, 48});
    CHECK(s[3].shape() == Shape{1, q / 4, q / 4, 96});
    CHECK(s[4].shape() == Shape{1, q / 8, q / 8, 192});
    CHECK(s[5].shape() == Shape{1, q / 8, q / 8, 24});
    CHECK(s[6].shape() == Shape{1, q / 4, q / 4, 24});
    CHECK(s[7].shape() == Shape{1, q / 2, q / 2, 24});
    CHECK(s[8].shape() == Shape{1, q, q, 24});
    CHECK(net.head(s).shape() == Shape{1, size, size, 3});
  }
  CHECK_THROWS_AS(net.forward(random_input(1, 48, 3)), ParameterError);
}

TEST_CASE("stage attention keeps 8x8 regions and indexes k1 by resolution") {
  DssauNet<float> net(ModelConfig{}, 1);
  const std::size_t sizes[8] = {64, 32, 16, 8, 8, 16, 32, 64};
  const std::size_t k1[8] = {1, 4, 16, 64, 64, 16, 4, 1};
  for (std::size_t s = 1; s <= 8; ++s) {
    const auto a = net.stage_attention(s, sizes[s - 1], sizes[s - 1]);
    CHECK(a.regions == 8);
    CHECK(a.k1 == k1[s - 1]);
    CHECK(a.head_dim == 32);
  }
  CHECK(net.stage_attention(2, 32, 32).heads == 6);
  CHECK(net.stage_attention(6, 16, 16).heads == 2);
}

TEST_CASE("a batch of two equals two batches of one, bitwise") {
  DssauNet<float> net(ModelConfig::tiny(), 4);
  NoGradGuard g;
  const auto a = random_input(1, 64, 5), b = random_input(1, 64, 6);
  const auto both = net.forward(concat(std::vector<Tensor<float>>{a, b}, 0));
  const auto ya = testing::values(net.forward(a)), yb = testing::values(net.forward(b));
  const auto y = testing::values(both);
  CHECK(std::vector<float>(y.begin(), y.begin() + long(ya.size())) == ya);
  CHECK(std::vector<float>(y.begin() + long(ya.size()), y.end()) == yb);
}

TEST_CASE("every parameter receives a gradient") {
  DssauNet<float> net(ModelConfig::tiny(), 7);
  const auto y = net.forward(random_input(1, 64, 8));
  sum(mul(y, y)).backward();
  std::size_t missing = 0, zero = 0;
  for (const auto& p : net.named_parameters()) {
    if (!p.tensor.has_grad()) {
      ++missing;
      continue;
    }
    bool any = false;
    for (float v : p.tensor.grad()) any |= v != 0.0f;
    if (!any) {
      MESSAGE("all-zero gradient: " << p.name);
      ++zero;
    }
  }
  CHECK(missing == 0);
  CHECK(zero == 0);
}

TEST_CASE("skip and fusion ablations build and run") {
  NoGradGuard g;
  const auto x = random_input(1, 64, 9);
  std::size_t previous = 0;
  for (std::size_t count = 0; count <= 3; ++count) {
    ModelConfig c = ModelConfig::tiny();
    c.skips = ModelConfig::skips_for_count(count);
    DssauNet<float> net(c, 10);
    CHECK(net.forward(x).shape() == Shape{1, 64, 64, 3});
    // Each enabled skip adds one 1x1 projection with bias.
    if (count > 0) {
      const std::size_t width = c.channels[count - 1];
      CHECK(net.parameter_count() - previous == width * c.decoder_width + c.decoder_width);
    }
    previous = net.parameter_count();
  }
  ModelConfig on = ModelConfig::tiny(), off = on;
  off.mff_enabled = false;
  DssauNet<float> with(on, 11), without(off, 11);
  CHECK(without.forward(x).shape() == Shape{1, 64, 64, 3});
  const std::size_t cd = on.decoder_width;
  CHECK(with.parameter_count() - without.parameter_count() == 3 * cd * cd);
}

TEST_CASE("constant decoder maps give constant logits away from the borders") {
  DssauNet<double> net(ModelConfig::tiny(), 12);
  NoGradGuard g;
  StageOutputs<double> s;
  const std::size_t cd = 24;
  for (std::size_t st = 5; st <= 8; ++st) {
    const std::size_t e = 2 << (st - 5);
    s[st] = Tensor<double>(Shape{1, e, e, cd}, 0.3);
  }
  const auto y = net.head(s);
  CHECK(y.shape() == Shape{1, 64, 64, 3});
  for (std::size_t c = 0; c < 3; ++c) {
    const double ref = y.data()[(5 * 64 + 5) * 3 + c];
    for (std::size_t i = 1; i < 63; ++i)
      for (std::size_t j = 1; j < 63; ++j) {
        CHECK(y.data()[(i * 64 + j) * 3 + c] == doctest::Approx(ref).epsilon(1e-12));
      }
  }
}

TEST_CASE("analytic cost equals counted multiply-accumulates and parameters") {
  for (auto cfg : {ModelConfig::tiny(), ModelConfig::small()}) {
    for (bool mff : {true, false}) {
      cfg.mff_enabled = mff;
      DssauNet<float> net(cfg, 13);
      NoGradGuard g;
      kernels::reset_mac_count();
      net.forward(random_input(1, 64, 14));
      const auto cost = count_cost(cfg, 64, 64);
      CHECK(cost.macs == kernels::mac_count());
      CHECK(cost.params == net.parameter_count());
      std::uint64_t macs = 0, params = 0;
      for (const auto& e : cost.breakdown) {
        macs += e.macs;
        params += e.params;
      }
      CHECK(macs == cost.macs);
      CHECK(params == cost.params);
    }
  }
}

TEST_CASE("a 64x64 forward of the tiny network is fast") {
  DssauNet<float> net(ModelConfig::tiny(), 15);
  NoGradGuard g;
  const auto t0 = std::chrono::steady_clock::now();
  net.forward(random_input(1, 64, 16));
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 1.0);
}
