#include "dssa/model.hpp"

#include <string>

namespace dssa {

namespace {

// Resolution slot (0 = 1/4 .. 3 = 1/32) of a stage number 1..8.
std::size_t resolution_slot(std::size_t stage) { return stage <= 4 ? stage - 1 : 8 - stage; }

}  // namespace

std::vector<std::size_t> ModelConfig::resolved_decoder_depths() const {
  return decoder_depths.empty() ? depths : decoder_depths;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (channels.size() != 4) fail("channels needs 4 entries");
  if (depths.size() != 4) fail("depths needs 4 entries");
  if (!decoder_depths.empty() && decoder_depths.size() != 4) fail("decoder_depths needs 4 entries");
  if (k1_schedule.size() != 4) fail("k1 needs 4 entries");
  if (in_channels == 0 || num_classes < 2) fail("need at least one input channel and two classes");
  if (decoder_width == 0 || mlp_ratio == 0 || regions == 0) fail("zero width, ratio or regions");
  if (!(lambda > 0.0 && lambda <= 1.0)) fail("lambda must lie in (0, 1]");
  if (head_dim == 0) fail("head_dim must be positive");
  for (std::size_t c : channels) {
    if (c == 0 || c % head_dim != 0) {
      fail("channel width " + std::to_string(c) + " not a multiple of head_dim " +
           std::to_string(head_dim));
    }
  }
  if (channels[0] % 2 != 0) fail("first channel width must be even");
  if (decoder_width % head_dim != 0) fail("c_d not a multiple of head_dim");
  for (std::size_t k : k1_schedule) {
    if (k == 0) fail("k1 entries must be positive");
  }
  if (ppm_bins.empty()) fail("ppm_bins must not be empty");
  for (std::size_t b : ppm_bins) {
    if (b == 0) fail("ppm bin sizes must be positive");
  }
  for (std::size_t s : skips) {
    if (s != 4 && s != 8 && s != 16) fail("skip resolutions must be drawn from {4, 8, 16}");
  }
}

std::set<std::size_t> ModelConfig::skips_for_count(std::size_t count) {
  switch (count) {
    case 0: return {};
    case 1: return {4};
    case 2: return {4, 8};
    case 3: return {4, 8, 16};
    default: throw ConfigError("skip count must be 0..3, got " + std::to_string(count));
  }
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.channels = {24, 48, 96, 192};
  c.depths = {1, 1, 1, 1};
  c.decoder_width = 24;
  c.head_dim = 8;
  c.mlp_ratio = 2;
  c.regions = 4;
  c.k1_schedule = {1, 4, 4, 4};
  c.lambda = 0.5;
  c.ppm_bins = {1, 2};
  return c;
}

ModelConfig ModelConfig::small() {
  ModelConfig c;
  c.channels = {16, 32, 64, 128};
  c.depths = {1, 1, 1, 1};
  c.decoder_width = 16;
  c.head_dim = 8;
  c.mlp_ratio = 2;
  c.regions = 4;
  c.k1_schedule = {2, 4, 4, 4};
  c.lambda = 0.5;
  c.ppm_bins = {1, 2};
  return c;
}

template <typename T>
DssauNet<T>::DssauNet(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  const auto& ch = cfg_.channels;
  const std::size_t cd = cfg_.decoder_width;
  const auto dec_depths = cfg_.resolved_decoder_depths();

  embed_ = PatchEmbedParams<T>::make(cfg_.in_channels, ch[0], rng);
  for (std::size_t s = 1; s <= 4; ++s) {
    if (s > 1) merges_[s - 2] = PatchMergeParams<T>::make(ch[s - 2], ch[s - 1], rng);
    for (std::size_t i = 0; i < cfg_.depths[s - 1]; ++i) {
      blocks_[s - 1].push_back(BlockParams<T>::make(ch[s - 1], cfg_.mlp_ratio, rng));
    }
  }
  ppm_ = PpmParams<T>::make(ch[3], cd, cfg_.ppm_bins, rng);
  const std::array<std::size_t, 3> skip_res{16, 8, 4};
  const std::array<std::size_t, 3> skip_width{ch[2], ch[1], ch[0]};
  for (std::size_t i = 0; i < 3; ++i) {
    if (cfg_.skips.count(skip_res[i])) {
      skip_proj_[i] = Conv2dParams<T>::make(skip_width[i], cd, 1, 1, 0, 1, true, rng);
    }
  }
  up_proj_ = Conv2dParams<T>::make(cd, cd, 1, 1, 0, 1, true, rng);
  for (std::size_t s = 5; s <= 8; ++s) {
    for (std::size_t i = 0; i < dec_depths[s - 5]; ++i) {
      blocks_[s - 1].push_back(BlockParams<T>::make(cd, cfg_.mlp_ratio, rng));
    }
  }
  const std::size_t head_in = cfg_.mff_enabled ? 4 * cd : cd;
  fuse_ = Conv2dParams<T>::make(head_in, cd, 1, 1, 0, 1, true, rng);
  classifier_ = Conv2dParams<T>::make(cd, cfg_.num_classes, 3, 1, 1, 1, true, rng);
}

template <typename T>
DssaConfig DssauNet<T>::stage_attention(std::size_t stage, std::size_t height,
                                        std::size_t width) const {
  const std::size_t c = stage <= 4 ? cfg_.channels[stage - 1] : cfg_.decoder_width;
  return DssaConfig::for_feature_map(c, height, width, cfg_.regions,
                                     cfg_.k1_schedule[resolution_slot(stage)], cfg_.lambda,
                                     cfg_.head_dim);
}

template <typename T>
Tensor<T> DssauNet<T>::run_blocks(const Tensor<T>& x, const std::vector<BlockParams<T>>& blocks,
                                  std::size_t stage) const {
  if (blocks.empty()) return x;
  const DssaConfig att = stage_attention(stage, x.dim(1), x.dim(2));
  Tensor<T> h = x;
  for (const auto& b : blocks) h = dssa_block(h, b, att);
  return h;
}

template <typename T>
StageOutputs<T> DssauNet<T>::encode(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(3) != cfg_.in_channels) {
    throw DimensionError("encode: expected (B, H, W, " + std::to_string(cfg_.in_channels) +
                         "), got " + shape_str(x.shape()));
  }
  StageOutputs<T> s;
  s[1] = run_blocks(patch_embed(x, embed_), blocks_[0], 1);
  for (std::size_t st = 2; st <= 4; ++st) {
    s[st] = run_blocks(patch_merge(s[st - 1], merges_[st - 2]), blocks_[st - 1], st);
  }
  return s;
}

template <typename T>
void DssauNet<T>::decode(StageOutputs<T>& s) const {
  for (std::size_t st = 1; st <= 4; ++st) {
    if (!s[st].defined()) throw ContractError("decode: encoder output X" + std::to_string(st) +
                                              " missing");
  }
  s[5] = run_blocks(ppm(s[4], ppm_), blocks_[4], 5);
  for (std::size_t st = 6; st <= 8; ++st) {
    Tensor<T> up = upsample_bilinear(s[st - 1], 2);
    if (st == 6) up = up_proj_(up);
    const auto& proj = skip_proj_[st - 6];
    Tensor<T> fused = proj ? add((*proj)(s[9 - st]), up) : up;
    s[st] = run_blocks(fused, blocks_[st - 1], st);
  }
}

template <typename T>
Tensor<T> DssauNet<T>::head(const StageOutputs<T>& s) const {
  for (std::size_t st = 5; st <= 8; ++st) {
    if (!s[st].defined()) throw ContractError("head: decoder output X" + std::to_string(st) +
                                              " missing");
  }
  Tensor<T> h = s[8];
  if (cfg_.mff_enabled) {
    h = concat(std::vector<Tensor<T>>{upsample_bilinear(s[5], 8), upsample_bilinear(s[6], 4),
                                      upsample_bilinear(s[7], 2), s[8]},
               -1);
  }
  return classifier_(upsample_bilinear(fuse_(h), 4));
}

template <typename T>
Tensor<T> DssauNet<T>::forward(const Tensor<T>& x) const {
  StageOutputs<T> s = encode(x);
  decode(s);
  return head(s);
}

template <typename T>
ParamList<T> DssauNet<T>::named_parameters() const {
  ParamList<T> out;
  embed_.collect("embed", out);
  for (std::size_t i = 0; i < 3; ++i) merges_[i].collect("merge" + std::to_string(i + 2), out);
  for (std::size_t st = 1; st <= 8; ++st) {
    if (st == 5) {
      ppm_.collect("ppm", out);
      const std::array<const char*, 3> names{"skip16", "skip8", "skip4"};
      for (std::size_t i = 0; i < 3; ++i) {
        if (skip_proj_[i]) skip_proj_[i]->collect(names[i], out);
      }
      up_proj_.collect("up_proj", out);
    }
    for (std::size_t i = 0; i < blocks_[st - 1].size(); ++i) {
      blocks_[st - 1][i].collect("stage" + std::to_string(st) + ".block" + std::to_string(i),
                                 out);
    }
  }
  fuse_.collect("head.fuse", out);
  classifier_.collect("head.classifier", out);
  return out;
}

template <typename T>
std::vector<Tensor<T>> DssauNet<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

template <typename T>
std::size_t DssauNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

template class DssauNet<float>;
template class DssauNet<double>;

}  // namespace dssa
