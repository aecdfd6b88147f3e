#pragma once

// Dual sparse selection attention.
//
// The feature map is cut into S x S regions. Region-level queries and keys
// are the per-region means of the projected tokens; each region keeps its k1
// best-scoring regions (routing is shared by all heads). Every pixel query
// then scores the k1 * n gathered keys of its region (n = HW / S^2 tokens per
// region), keeps the top k2 = round(lambda * k1 * n), normalizes the kept
// scores with a softmax and takes the weighted sum of the matching values.
// A 5x5 depth-wise convolution of V (local context term) is added on top.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dssa/layers.hpp"

namespace dssa {

/// Sparsity settings of one attention layer.
struct DssaConfig {
  std::size_t regions = 8;  // S: regions per side
  std::size_t k1 = 1;       // regions kept per query region
  double lambda = 1.0 / 8;  // pixel-level keep fraction
  std::size_t heads = 1;
  std::size_t head_dim = 32;

  std::size_t channels() const { return heads * head_dim; }
  std::size_t tokens_per_region(std::size_t height, std::size_t width) const {
    return height * width / (regions * regions);
  }
  // round-half-up(lambda * k1 * n), at least 1 and at most k1 * n.
  std::size_t k2(std::size_t height, std::size_t width) const;

  // Throws ConfigError when the settings cannot run on a (height, width,
  // channels) feature map.
  void validate(std::size_t channels, std::size_t height, std::size_t width) const;

  /// Per-stage settings for a feature map. The region count is the largest
  /// divisor of both extents not above `regions`; k1 is capped at S^2.
  static DssaConfig for_feature_map(std::size_t channels, std::size_t height, std::size_t width,
                                    std::size_t regions, std::size_t k1, double lambda,
                                    std::size_t head_dim);
};

/// Diagnostic view of one forward call.
struct AttentionTrace {
  std::vector<double> region_scores;  // A^r, (B, S^2, S^2)
  IndexTensor region_indices;         // I^r, (B, S^2, k1)
  IndexTensor pixel_indices;          // I^P, (B, heads, S^2, n, k2)
  // Counted per head and image from the tensors that were actually formed.
  std::uint64_t score_evaluations = 0;  // pixel-level query/key products
  std::uint64_t retained_pairs = 0;     // pairs surviving the k2 selection
  // retained_pairs / (HW)^2, i.e. k2 / HW.
  double kept_fraction = 0;
};

template <typename T>
struct DssaParams {
  Tensor<T> wq, wk, wv;  // (C, C), bias-free
  Conv2dParams<T> lce;   // 5x5 depth-wise, with bias

  static DssaParams make(std::size_t channels, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
struct Qkv {
  Tensor<T> q, k, v;
};

// Xr is (B, S^2, n, C); each output has the same shape.
template <typename T>
Qkv<T> project_qkv(const Tensor<T>& xr, const Tensor<T>& wq, const Tensor<T>& wk,
                   const Tensor<T>& wv);

template <typename T>
struct RegionRoute {
  IndexTensor indices;  // (B, S^2, k1), best first
  Tensor<T> scores;     // (B, S^2, S^2), unscaled
};

// q, k are (B, S^2, n, C). No gradient flows through the routing.
template <typename T>
RegionRoute<T> region_route(const Tensor<T>& q, const Tensor<T>& k, const DssaConfig& cfg);

template <typename T>
struct GatheredKv {
  Tensor<T> k, v;  // (B, S^2, k1 * n, C)
};

template <typename T>
GatheredKv<T> gather_regions(const Tensor<T>& k, const Tensor<T>& v,
                             const IndexTensor& region_indices);

template <typename T>
struct PixelSelection {
  Tensor<T> scores;     // A^P, (B, heads, S^2, n, k2), scaled by 1/sqrt(head_dim)
  IndexTensor indices;  // I^P, same shape, best first
};

// q is (B, heads, S^2, n, d) and kg is (B, heads, S^2, k1 * n, d).
template <typename T>
PixelSelection<T> pixel_select(const Tensor<T>& q, const Tensor<T>& kg, std::size_t k2);

template <typename T>
struct DssaParts {
  Tensor<T> attention;      // sparse attention output, (B, H, W, C)
  Tensor<T> local_context;  // LCE(V), (B, H, W, C)
  Tensor<T> output;         // attention + local_context
};

template <typename T>
DssaParts<T> dssa_forward_parts(const Tensor<T>& x, const DssaParams<T>& params,
                                const DssaConfig& cfg, AttentionTrace* trace = nullptr);

/// x is (B, H, W, C) with H and W divisible by cfg.regions.
template <typename T>
Tensor<T> dssa_forward(const Tensor<T>& x, const DssaParams<T>& params, const DssaConfig& cfg,
                       AttentionTrace* trace = nullptr);

/// Records the discrete routing choices of a forward pass and replays them
/// on later passes, so finite differences see a smooth function of the
/// parameters. Only one tape is active per thread.
class RoutingTape {
 public:
  enum class Mode { Record, Replay };

  void start_recording();
  void start_replay();
  Mode mode() const { return mode_; }
  std::size_t size() const { return entries_.size(); }

  // Called by the attention layers. In Record mode the fresh indices are
  // stored and returned; in Replay mode the stored entry is returned.
  const IndexTensor& route(const IndexTensor& fresh);
  bool replaying() const { return mode_ == Mode::Replay; }
  const IndexTensor& next_replay();

 private:
  Mode mode_ = Mode::Record;
  std::vector<IndexTensor> entries_;
  std::size_t cursor_ = 0;
};

class RoutingTapeScope {
 public:
  explicit RoutingTapeScope(RoutingTape& tape);
  ~RoutingTapeScope();
  RoutingTapeScope(const RoutingTapeScope&) = delete;
  RoutingTapeScope& operator=(const RoutingTapeScope&) = delete;

 private:
  RoutingTape* previous_;
};

RoutingTape* active_routing_tape();

}  // namespace dssa
