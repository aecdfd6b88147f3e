#include "dssa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dssa/blocks.hpp"
#include "dssa/ops.hpp"

namespace dssa {

template <typename T>
Tensor<T> dense_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          std::size_t heads) {
  if (q.rank() != 3 || k.shape() != v.shape() || k.rank() != 3 || q.dim(0) != k.dim(0) ||
      q.dim(2) != k.dim(2)) {
    throw DimensionError("dense_attention: q " + shape_str(q.shape()) + ", k " +
                         shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  const std::size_t B = q.dim(0), N = q.dim(1), M = k.dim(1), C = q.dim(2);
  if (heads == 0 || C % heads != 0) {
    throw DimensionError("dense_attention: " + std::to_string(heads) + " heads for " +
                         std::to_string(C) + " channels");
  }
  const std::size_t d = C / heads;
  const double inv = 1.0 / std::sqrt(double(d));
  std::vector<T> out(B * N * C);
  std::vector<double> s(M);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < N; ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j < M; ++j) {
          double dot = 0;
          for (std::size_t c = 0; c < d; ++c) {
            dot += double(q.data()[(b * N + i) * C + h * d + c]) *
                   double(k.data()[(b * M + j) * C + h * d + c]);
          }
          s[j] = dot * inv;
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (std::size_t j = 0; j < M; ++j) z += (s[j] = std::exp(s[j] - mx));
        for (std::size_t c = 0; c < d; ++c) {
          double acc = 0;
          for (std::size_t j = 0; j < M; ++j) {
            acc += s[j] * double(v.data()[(b * M + j) * C + h * d + c]);
          }
          out[(b * N + i) * C + h * d + c] = T(acc / z);
        }
      }
    }
  }
  return Tensor<T>(q.shape(), std::move(out));
}

template Tensor<float> dense_attention(const Tensor<float>&, const Tensor<float>&,
                                       const Tensor<float>&, std::size_t);
template Tensor<double> dense_attention(const Tensor<double>&, const Tensor<double>&,
                                        const Tensor<double>&, std::size_t);

GradCheckResult grad_check(const std::function<Tensor<double>()>& f,
                           const ParamList<double>& params, const GradCheckOptions& opts) {
  RoutingTape tape;
  RoutingTapeScope scope(tape);
  tape.start_recording();
  for (const auto& p : params) {
    Tensor<double> t = p.tensor;
    t.zero_grad();
  }
  Tensor<double> loss = f();
  if (loss.numel() != 1) throw ContractError("grad_check: objective must be a scalar");
  loss.backward();

  tape.start_replay();
  auto evaluate = [&] {
    NoGradGuard no_grad;
    tape.start_replay();
    return f().item();
  };

  std::mt19937_64 rng(opts.seed);
  GradCheckResult result;
  for (const auto& p : params) {
    Tensor<double> t = p.tensor;
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > opts.coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.coords_per_tensor);
    }
    for (std::size_t i : coords) {
      const double analytic = t.has_grad() ? t.grad()[i] : 0.0;
      const double saved = t.data()[i];
      t.data()[i] = saved + opts.step;
      const double up = evaluate();
      t.data()[i] = saved - opts.step;
      const double down = evaluate();
      t.data()[i] = saved;
      const double numeric = (up - down) / (2 * opts.step);
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), opts.denominator_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.coordinates;
      if (rel >= result.worst_relative_error) {
        result.worst_relative_error = rel;
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

namespace {

Tensor<double> random_input(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

}  // namespace

GradCheckResult check_block_gradients(const DssaConfig& cfg, std::size_t size,
                                      std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  const std::size_t c = cfg.channels();
  auto block = BlockParams<double>::make(c, 2, rng);
  Tensor<double> x = random_input({1, size, size, c}, rng);
  x.set_requires_grad(true);
  const Tensor<double> w = random_input({1, size, size, c}, rng);
  ParamList<double> params{{"x", x}};
  block.collect("block", params);
  return grad_check([&] { return sum(mul(dssa_block(x, block, cfg), w)); }, params, opts);
}

GradCheckResult check_net_gradients(const ModelConfig& cfg, std::size_t size, std::uint64_t seed,
                                    const GradCheckOptions& opts) {
  DssauNet<double> net(cfg, seed);
  Rng rng(seed + 1);
  const Tensor<double> x = random_input({1, size, size, cfg.in_channels}, rng);
  const Tensor<double> w = random_input({1, size, size, cfg.num_classes}, rng);
  return grad_check([&] { return sum(mul(net.forward(x), w)); }, net.named_parameters(), opts);
}

std::uint64_t dssa_attention_macs(const DssaConfig& cfg, std::size_t height, std::size_t width) {
  const std::uint64_t hw = std::uint64_t(height) * width;
  const std::uint64_t c = cfg.channels();
  const std::uint64_t r = std::uint64_t(cfg.regions) * cfg.regions;
  const std::uint64_t gathered = cfg.k1 * cfg.tokens_per_region(height, width);
  const std::uint64_t k2 = cfg.k2(height, width);
  return 3 * hw * c * c     // Q, K, V projections
         + r * r * c        // region-to-region scores
         + hw * gathered * c  // pixel scores against the gathered keys
         + hw * k2 * c      // weighted sum over the k2 survivors
         + hw * 25 * c;     // 5x5 depth-wise local context
}

namespace {

struct Counter {
  CostReport& report;

  CostEntry& entry(const std::string& name) {
    for (auto& e : report.breakdown) {
      if (e.name == name) return e;
    }
    report.breakdown.push_back({name, 0, 0});
    return report.breakdown.back();
  }

  // k x k conv with bias on an out_h x out_w output.
  void conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k,
            std::size_t groups, std::size_t out_h, std::size_t out_w) {
    auto& e = entry(name);
    e.macs += std::uint64_t(out_h) * out_w * out * k * k * (in / groups);
    e.params += std::uint64_t(k) * k * (in / groups) * out + out;
  }
  void layer_norm(const std::string& name, std::size_t c) { entry(name).params += 2 * c; }
  void block(const std::string& name, const DssaConfig& att, std::size_t c, std::size_t ratio,
             std::size_t h, std::size_t w) {
    conv(name, c, c, 3, c, h, w);
    layer_norm(name, c);
    layer_norm(name, c);
    auto& e = entry(name);
    e.macs += dssa_attention_macs(att, h, w);
    e.params += 3 * std::uint64_t(c) * c + 25 * c + c;
    const std::uint64_t hidden = std::uint64_t(c) * ratio;
    e.macs += 2 * std::uint64_t(h) * w * c * hidden;
    e.params += c * hidden + hidden + hidden * c + c;
  }
};

}  // namespace

CostReport count_cost(const ModelConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  if (height % 32 != 0 || width % 32 != 0) {
    throw ParameterError("count_cost: extent " + std::to_string(height) + "x" +
                         std::to_string(width) + " must be a multiple of 32");
  }
  CostReport report;
  Counter n{report};
  const auto& ch = cfg.channels;
  const std::size_t cd = cfg.decoder_width;
  const auto dec_depths = cfg.resolved_decoder_depths();
  std::array<std::size_t, 4> hs{}, ws{};
  for (std::size_t i = 0; i < 4; ++i) {
    hs[i] = height >> (i + 2);
    ws[i] = width >> (i + 2);
  }
  auto attention = [&](std::size_t c, std::size_t slot) {
    return DssaConfig::for_feature_map(c, hs[slot], ws[slot], cfg.regions, cfg.k1_schedule[slot],
                                       cfg.lambda, cfg.head_dim);
  };

  n.conv("embed", cfg.in_channels, ch[0] / 2, 3, 1, height / 2, width / 2);
  n.layer_norm("embed", ch[0] / 2);
  n.conv("embed", ch[0] / 2, ch[0], 3, 1, hs[0], ws[0]);
  n.layer_norm("embed", ch[0]);
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string name = "stage" + std::to_string(s + 1);
    if (s > 0) {
      n.conv(name, ch[s - 1], ch[s], 3, 1, hs[s], ws[s]);
      n.layer_norm(name, ch[s]);
    }
    const DssaConfig att = attention(ch[s], s);
    for (std::size_t b = 0; b < cfg.depths[s]; ++b) {
      n.block(name, att, ch[s], cfg.mlp_ratio, hs[s], ws[s]);
    }
  }

  for (std::size_t bin : cfg.ppm_bins) n.conv("ppm", ch[3], cd, 1, 1, bin, bin);
  n.conv("ppm", ch[3] + cfg.ppm_bins.size() * cd, cd, 3, 1, hs[3], ws[3]);
  n.layer_norm("ppm", cd);

  for (std::size_t st = 5; st <= 8; ++st) {
    const std::size_t slot = 8 - st;
    const std::string name = "stage" + std::to_string(st);
    if (st == 6) n.conv(name, cd, cd, 1, 1, hs[slot], ws[slot]);
    const std::size_t denom = std::size_t(4) << slot;
    if (st > 5 && cfg.skips.count(denom)) n.conv(name, ch[slot], cd, 1, 1, hs[slot], ws[slot]);
    const DssaConfig att = attention(cd, slot);
    for (std::size_t b = 0; b < dec_depths[st - 5]; ++b) {
      n.block(name, att, cd, cfg.mlp_ratio, hs[slot], ws[slot]);
    }
  }

  n.conv("head", cfg.mff_enabled ? 4 * cd : cd, cd, 1, 1, hs[0], ws[0]);
  n.conv("head", cd, cfg.num_classes, 3, 1, height, width);

  for (const auto& e : report.breakdown) {
    report.macs += e.macs;
    report.params += e.params;
  }
  return report;
}

}  // namespace dssa
