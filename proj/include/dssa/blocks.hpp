#pragma once

#include <cstddef>
#include <vector>

#include "dssa/attention.hpp"

namespace dssa {

/// One DSSA block:
///   u    = DWConv3x3(z) + z
///   zhat = DSSA(LN(u)) + u
///   out  = MLP(LN(zhat)) + zhat,  MLP = Linear -> GELU -> Linear
template <typename T>
struct BlockParams {
  Conv2dParams<T> pos;  // 3x3 depth-wise position encoding, with bias
  LayerNormParams<T> ln1, ln2;
  DssaParams<T> attn;
  LinearParams<T> fc1, fc2;

  static BlockParams make(std::size_t channels, std::size_t mlp_ratio, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const;

  // (3 + 2r) C^2 + (41 + r) C for width C and MLP ratio r:
  // pos 10C, two LNs 4C, qkv 3C^2, LCE 26C, fc1 rC^2 + rC, fc2 rC^2 + C.
  static std::size_t parameter_count(std::size_t channels, std::size_t mlp_ratio);
};

template <typename T>
Tensor<T> dssa_block(const Tensor<T>& z, const BlockParams<T>& params, const DssaConfig& cfg);

// conv3x3 s2 (in -> C/2) + LN + GELU + conv3x3 s2 (C/2 -> C) + LN.
template <typename T>
struct PatchEmbedParams {
  Conv2dParams<T> conv1, conv2;
  LayerNormParams<T> ln1, ln2;

  static PatchEmbedParams make(std::size_t in_channels, std::size_t channels, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// (B, H, W, in) -> (B, H/4, W/4, C); H and W must be multiples of 32.
template <typename T>
Tensor<T> patch_embed(const Tensor<T>& x, const PatchEmbedParams<T>& params);

// conv3x3 s2 (C -> 2C) + LN.
template <typename T>
struct PatchMergeParams {
  Conv2dParams<T> conv;
  LayerNormParams<T> ln;

  static PatchMergeParams make(std::size_t in_channels, std::size_t out_channels, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Halves H and W (both must be even) and maps C to the conv's out width.
template <typename T>
Tensor<T> patch_merge(const Tensor<T>& x, const PatchMergeParams<T>& params);

/// Pyramid pooling: per bin size, adaptive average pool -> 1x1 conv (to
/// C_d) -> GELU -> bilinear resize back; the input and all branches are
/// concatenated and fused by conv3x3 -> LN -> GELU down to C_d channels.
template <typename T>
struct PpmParams {
  std::vector<std::size_t> bins;
  std::vector<Conv2dParams<T>> branches;
  Conv2dParams<T> fuse;
  LayerNormParams<T> ln;

  static PpmParams make(std::size_t in_channels, std::size_t out_channels,
                        std::vector<std::size_t> bins, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
Tensor<T> ppm(const Tensor<T>& x, const PpmParams<T>& params);

}  // namespace dssa
