#pragma once

// Reference instruments: a loop-level dense attention, a finite-difference
// gradient checker and analytic parameter / multiply-accumulate accounting.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dssa/model.hpp"

namespace dssa {

/// softmax(Q K^T / sqrt(d)) V per head with plain loops in double precision.
/// q, k, v are (B, N, C) with C divisible by heads; no autodiff.
template <typename T>
Tensor<T> dense_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          std::size_t heads);

struct GradCheckOptions {
  double step = 1e-4;
  std::size_t coords_per_tensor = 10;  // tensors smaller than this are checked fully
  double denominator_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double worst_relative_error = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t coordinates = 0;
};

/// Central differences on sampled coordinates of every parameter tensor,
/// compared with the autodiff gradient of the scalar f(). The relative error
/// is |a - n| / max(|a|, |n|, floor). Attention routing is recorded on the
/// autodiff pass and replayed for every perturbed evaluation.
GradCheckResult grad_check(const std::function<Tensor<double>()>& f,
                           const ParamList<double>& params, const GradCheckOptions& opts = {});

// Objective sum(f(x) * w) for a fixed random w; x and every block parameter
// are checked. Input is (1, size, size, channels).
GradCheckResult check_block_gradients(const DssaConfig& cfg, std::size_t size,
                                      std::uint64_t seed, const GradCheckOptions& opts = {});

/// Same objective on the logits of a 64-bit network over a random
/// (1, size, size, in_channels) input.
GradCheckResult check_net_gradients(const ModelConfig& cfg, std::size_t size, std::uint64_t seed,
                                    const GradCheckOptions& opts = {});

struct CostEntry {
  std::string name;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
};

/// Analytic cost of one forward pass. Only multiply-accumulates of
/// convolutions and matrix products are counted; normalization, activations,
/// pooling, interpolation, top-k and gathers count as zero. One MAC is
/// reported as one FLOP, the convention of common model profilers.
struct CostReport {
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
  std::vector<CostEntry> breakdown;

  double gflops() const { return double(macs) / 1e9; }
  double mparams() const { return double(params) / 1e6; }
};

// MACs of one DSSA attention layer (projections, routing, both score
// stages, value aggregation and local context) on one image.
std::uint64_t dssa_attention_macs(const DssaConfig& cfg, std::size_t height, std::size_t width);

CostReport count_cost(const ModelConfig& cfg, std::size_t height, std::size_t width);

}  // namespace dssa
