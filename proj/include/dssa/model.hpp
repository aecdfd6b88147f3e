#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "dssa/blocks.hpp"

namespace dssa {

struct ModelConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels{96, 192, 384, 768};
  std::vector<std::size_t> depths{2, 2, 8, 2};
  // Stages 5..8; empty means "same as depths".
  std::vector<std::size_t> decoder_depths;
  std::size_t decoder_width = 64;  // C_d
  std::size_t num_classes = 3;
  // Indexed by resolution 1/4, 1/8, 1/16, 1/32; the decoder stage at a given
  // resolution uses the same k1 as the encoder stage there.
  std::vector<std::size_t> k1_schedule{1, 4, 16, 64};
  double lambda = 1.0 / 8;
  std::size_t regions = 8;
  std::size_t head_dim = 32;
  std::size_t mlp_ratio = 3;
  std::vector<std::size_t> ppm_bins{1, 2, 3, 6};
  // Enabled skip resolutions as denominators: any subset of {4, 8, 16}.
  std::set<std::size_t> skips{4, 8, 16};
  bool mff_enabled = true;

  std::vector<std::size_t> resolved_decoder_depths() const;
  void validate() const;

  // The ablation rows with 0..3 skip connections: {}, {4}, {4, 8}, {4, 8, 16}.
  static std::set<std::size_t> skips_for_count(std::size_t count);
  // Narrow settings used by the gradient check and quick tests (C = 24).
  static ModelConfig tiny();
  // Settings used for the synthetic training runs.
  static ModelConfig small();
};

/// X1..X4 (encoder, 1/4 .. 1/32) and X5..X8 (decoder, 1/32 .. 1/4).
template <typename T>
struct StageOutputs {
  std::array<Tensor<T>, 8> x;

  Tensor<T>& operator[](std::size_t stage) { return x.at(stage - 1); }
  const Tensor<T>& operator[](std::size_t stage) const { return x.at(stage - 1); }
};

template <typename T>
class DssauNet {
 public:
  DssauNet(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  // Fills X1..X4. Input is (B, H, W, in_channels) with H, W multiples of 32.
  StageOutputs<T> encode(const Tensor<T>& x) const;
  // Fills X5..X8 from X1..X4.
  void decode(StageOutputs<T>& s) const;
  // Logits (B, 4 * H8, 4 * W8, num_classes).
  Tensor<T> head(const StageOutputs<T>& s) const;
  Tensor<T> forward(const Tensor<T>& x) const;

  ParamList<T> named_parameters() const;
  std::vector<Tensor<T>> parameters() const;
  std::size_t parameter_count() const;

  // DSSA settings for a stage (1..8) whose feature map is height x width.
  DssaConfig stage_attention(std::size_t stage, std::size_t height, std::size_t width) const;

 private:
  Tensor<T> run_blocks(const Tensor<T>& x, const std::vector<BlockParams<T>>& blocks,
                       std::size_t stage) const;

  ModelConfig cfg_;
  PatchEmbedParams<T> embed_;
  std::array<PatchMergeParams<T>, 3> merges_;
  std::array<std::vector<BlockParams<T>>, 8> blocks_;
  PpmParams<T> ppm_;
  // 1x1 skip projections for X3, X2, X1 (enabled skips only).
  std::array<std::optional<Conv2dParams<T>>, 3> skip_proj_;
  Conv2dParams<T> up_proj_;  // 1x1 on Up(X5) ahead of stage 6
  Conv2dParams<T> fuse_;        // 1x1 over the MFF concat (or X8 alone)
  Conv2dParams<T> classifier_;  // 3x3 to num_classes
};

}  // namespace dssa
