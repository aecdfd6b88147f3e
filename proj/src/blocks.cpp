#include "dssa/blocks.hpp"

#include <algorithm>
#include <string>

namespace dssa {

template <typename T>
BlockParams<T> BlockParams<T>::make(std::size_t channels, std::size_t mlp_ratio, Rng& rng) {
  BlockParams p;
  p.pos = Conv2dParams<T>::make(channels, channels, 3, 1, 1, channels, true, rng);
  p.ln1 = LayerNormParams<T>::make(channels);
  p.attn = DssaParams<T>::make(channels, rng);
  p.ln2 = LayerNormParams<T>::make(channels);
  p.fc1 = LinearParams<T>::make(channels, channels * mlp_ratio, true, rng);
  p.fc2 = LinearParams<T>::make(channels * mlp_ratio, channels, true, rng);
  return p;
}

template <typename T>
void BlockParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  pos.collect(prefix + ".pos", out);
  ln1.collect(prefix + ".ln1", out);
  attn.collect(prefix + ".attn", out);
  ln2.collect(prefix + ".ln2", out);
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

template <typename T>
std::size_t BlockParams<T>::parameter_count(std::size_t c, std::size_t r) {
  return (3 + 2 * r) * c * c + (41 + r) * c;
}

template <typename T>
Tensor<T> dssa_block(const Tensor<T>& z, const BlockParams<T>& p, const DssaConfig& cfg) {
  Tensor<T> u = add(p.pos(z), z);
  Tensor<T> zhat = add(dssa_forward(p.ln1(u), p.attn, cfg), u);
  Tensor<T> mlp = p.fc2(gelu(p.fc1(p.ln2(zhat))));
  return add(mlp, zhat);
}

template <typename T>
PatchEmbedParams<T> PatchEmbedParams<T>::make(std::size_t in_channels, std::size_t channels,
                                              Rng& rng) {
  if (channels < 2 || channels % 2 != 0) {
    throw ConfigError("patch_embed: channel width " + std::to_string(channels) + " must be even");
  }
  PatchEmbedParams p;
  p.conv1 = Conv2dParams<T>::make(in_channels, channels / 2, 3, 2, 1, 1, true, rng);
  p.ln1 = LayerNormParams<T>::make(channels / 2);
  p.conv2 = Conv2dParams<T>::make(channels / 2, channels, 3, 2, 1, 1, true, rng);
  p.ln2 = LayerNormParams<T>::make(channels);
  return p;
}

template <typename T>
void PatchEmbedParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  conv1.collect(prefix + ".conv1", out);
  ln1.collect(prefix + ".ln1", out);
  conv2.collect(prefix + ".conv2", out);
  ln2.collect(prefix + ".ln2", out);
}

template <typename T>
Tensor<T> patch_embed(const Tensor<T>& x, const PatchEmbedParams<T>& p) {
  if (x.rank() != 4) throw DimensionError("patch_embed: expected NHWC, got " + shape_str(x.shape()));
  if (x.dim(1) % 32 != 0 || x.dim(2) % 32 != 0) {
    throw ParameterError("patch_embed: input " + std::to_string(x.dim(1)) + "x" +
                         std::to_string(x.dim(2)) + " must be a multiple of 32");
  }
  Tensor<T> h = gelu(p.ln1(p.conv1(x)));
  return p.ln2(p.conv2(h));
}

template <typename T>
PatchMergeParams<T> PatchMergeParams<T>::make(std::size_t in_channels, std::size_t out_channels,
                                              Rng& rng) {
  return {Conv2dParams<T>::make(in_channels, out_channels, 3, 2, 1, 1, true, rng),
          LayerNormParams<T>::make(out_channels)};
}

template <typename T>
void PatchMergeParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  conv.collect(prefix + ".conv", out);
  ln.collect(prefix + ".ln", out);
}

template <typename T>
Tensor<T> patch_merge(const Tensor<T>& x, const PatchMergeParams<T>& p) {
  if (x.rank() != 4) throw DimensionError("patch_merge: expected NHWC, got " + shape_str(x.shape()));
  if (x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    throw ParameterError("patch_merge: odd extent " + std::to_string(x.dim(1)) + "x" +
                         std::to_string(x.dim(2)));
  }
  return p.ln(p.conv(x));
}

template <typename T>
PpmParams<T> PpmParams<T>::make(std::size_t in_channels, std::size_t out_channels,
                                std::vector<std::size_t> bins, Rng& rng) {
  if (bins.empty()) throw ConfigError("ppm: at least one bin size required");
  PpmParams p;
  p.bins = std::move(bins);
  for (std::size_t i = 0; i < p.bins.size(); ++i) {
    p.branches.push_back(Conv2dParams<T>::make(in_channels, out_channels, 1, 1, 0, 1, true, rng));
  }
  const std::size_t cat = in_channels + p.bins.size() * out_channels;
  p.fuse = Conv2dParams<T>::make(cat, out_channels, 3, 1, 1, 1, true, rng);
  p.ln = LayerNormParams<T>::make(out_channels);
  return p;
}

template <typename T>
void PpmParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < branches.size(); ++i) {
    branches[i].collect(prefix + ".branch" + std::to_string(bins[i]), out);
  }
  fuse.collect(prefix + ".fuse", out);
  ln.collect(prefix + ".ln", out);
}

template <typename T>
Tensor<T> ppm(const Tensor<T>& x, const PpmParams<T>& p) {
  if (x.rank() != 4) throw DimensionError("ppm: expected NHWC, got " + shape_str(x.shape()));
  const std::size_t H = x.dim(1), W = x.dim(2);
  const std::size_t largest = *std::max_element(p.bins.begin(), p.bins.end());
  if (H < largest || W < largest) {
    throw ParameterError("ppm: input " + std::to_string(H) + "x" + std::to_string(W) +
                         " smaller than largest bin " + std::to_string(largest));
  }
  std::vector<Tensor<T>> parts{x};
  for (std::size_t i = 0; i < p.bins.size(); ++i) {
    Tensor<T> pooled = adaptive_avg_pool(x, p.bins[i]);
    parts.push_back(resize_bilinear(gelu(p.branches[i](pooled)), H, W));
  }
  return gelu(p.ln(p.fuse(concat(parts, -1))));
}

#define DSSA_INSTANTIATE(T)                                                                   \
  template struct BlockParams<T>;                                                             \
  template struct PatchEmbedParams<T>;                                                        \
  template struct PatchMergeParams<T>;                                                        \
  template struct PpmParams<T>;                                                               \
  template Tensor<T> dssa_block(const Tensor<T>&, const BlockParams<T>&, const DssaConfig&);  \
  template Tensor<T> patch_embed(const Tensor<T>&, const PatchEmbedParams<T>&);               \
  template Tensor<T> patch_merge(const Tensor<T>&, const PatchMergeParams<T>&);               \
  template Tensor<T> ppm(const Tensor<T>&, const PpmParams<T>&);

DSSA_INSTANTIATE(float)
DSSA_INSTANTIATE(double)
#undef DSSA_INSTANTIATE

}  // namespace dssa
