#include "dssa/attention.hpp"

#include <cmath>
#include <string>

namespace dssa {

std::size_t DssaConfig::k2(std::size_t height, std::size_t width) const {
  const std::size_t gathered = k1 * tokens_per_region(height, width);
  const double raw = lambda * double(gathered);
  auto k = static_cast<std::size_t>(std::floor(raw + 0.5));
  if (k < 1) k = 1;
  if (k > gathered) k = gathered;
  return k;
}

void DssaConfig::validate(std::size_t channels, std::size_t height, std::size_t width) const {
  auto fail = [](const std::string& msg) { throw ConfigError("DSSA config: " + msg); };
  if (regions == 0) fail("regions must be positive");
  if (height % regions != 0 || width % regions != 0) {
    fail("feature map " + std::to_string(height) + "x" + std::to_string(width) +
         " not divisible into " + std::to_string(regions) + "x" + std::to_string(regions) +
         " regions");
  }
  if (k1 < 1 || k1 > regions * regions) {
    fail("k1=" + std::to_string(k1) + " outside [1, " + std::to_string(regions * regions) + "]");
  }
  if (!(lambda > 0.0 && lambda <= 1.0)) fail("lambda must lie in (0, 1]");
  if (heads == 0 || head_dim == 0 || heads * head_dim != channels) {
    fail(std::to_string(heads) + " heads x " + std::to_string(head_dim) + " != " +
         std::to_string(channels) + " channels");
  }
}

DssaConfig DssaConfig::for_feature_map(std::size_t channels, std::size_t height,
                                       std::size_t width, std::size_t regions, std::size_t k1,
                                       double lambda, std::size_t head_dim) {
  if (head_dim == 0 || channels % head_dim != 0) {
    throw ConfigError("DSSA config: head_dim " + std::to_string(head_dim) +
                      " does not divide " + std::to_string(channels) + " channels");
  }
  DssaConfig cfg;
  cfg.regions = 1;
  for (std::size_t s = std::min(regions, std::min(height, width)); s >= 1; --s) {
    if (height % s == 0 && width % s == 0) {
      cfg.regions = s;
      break;
    }
  }
  cfg.k1 = std::min(k1, cfg.regions * cfg.regions);
  cfg.lambda = lambda;
  cfg.head_dim = head_dim;
  cfg.heads = channels / head_dim;
  cfg.validate(channels, height, width);
  return cfg;
}

template <typename T>
DssaParams<T> DssaParams<T>::make(std::size_t channels, Rng& rng) {
  DssaParams p;
  const double bound = 1.0 / std::sqrt(double(channels));
  p.wq = uniform_param<T>(Shape{channels, channels}, bound, rng);
  p.wk = uniform_param<T>(Shape{channels, channels}, bound, rng);
  p.wv = uniform_param<T>(Shape{channels, channels}, bound, rng);
  p.lce = Conv2dParams<T>::make(channels, channels, 5, 1, 2, channels, true, rng);
  return p;
}

template <typename T>
void DssaParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".wq", wq});
  out.push_back({prefix + ".wk", wk});
  out.push_back({prefix + ".wv", wv});
  lce.collect(prefix + ".lce", out);
}

template <typename T>
Qkv<T> project_qkv(const Tensor<T>& xr, const Tensor<T>& wq, const Tensor<T>& wk,
                   const Tensor<T>& wv) {
  const std::size_t c = xr.dim(-1);
  for (const auto* w : {&wq, &wk, &wv}) {
    if (w->rank() != 2 || w->dim(0) != c || w->dim(1) != c) {
      throw DimensionError("project_qkv: weight " + shape_str(w->shape()) + " for " +
                           std::to_string(c) + " channels");
    }
  }
  return {matmul(xr, wq), matmul(xr, wk), matmul(xr, wv)};
}

template <typename T>
RegionRoute<T> region_route(const Tensor<T>& q, const Tensor<T>& k, const DssaConfig& cfg) {
  NoGradGuard no_grad;
  Tensor<T> qr = mean_axis(q.detach(), 2);  // (B, S^2, C)
  Tensor<T> kr = mean_axis(k.detach(), 2);
  Tensor<T> scores = matmul(qr, transpose_last(kr));  // (B, S^2, S^2)
  RoutingTape* tape = active_routing_tape();
  if (tape && tape->replaying()) return {tape->next_replay(), scores};
  IndexTensor idx = topk(scores, cfg.k1, -1).indices;
  if (tape) return {tape->route(idx), scores};
  return {std::move(idx), scores};
}

template <typename T>
GatheredKv<T> gather_regions(const Tensor<T>& k, const Tensor<T>& v,
                             const IndexTensor& region_indices) {
  if (k.rank() != 4 || k.shape() != v.shape() || region_indices.rank() != 3 ||
      region_indices.shape[0] != k.dim(0) || region_indices.shape[1] != k.dim(1)) {
    throw DimensionError("gather_regions: keys " + shape_str(k.shape()) + ", values " +
                         shape_str(v.shape()) + ", indices " + shape_str(region_indices.shape));
  }
  const std::size_t B = k.dim(0), R = k.dim(1), n = k.dim(2), C = k.dim(3);
  const std::size_t k1 = region_indices.shape[2];
  IndexTensor flat = region_indices.reshaped(Shape{B, R * k1});
  Shape out{B, R, k1 * n, C};
  return {reshape(gather(k, flat, 1), out), reshape(gather(v, flat, 1), out)};
}

template <typename T>
PixelSelection<T> pixel_select(const Tensor<T>& q, const Tensor<T>& kg, std::size_t k2) {
  if (q.rank() != 5 || kg.rank() != 5 || q.dim(-1) != kg.dim(-1)) {
    throw DimensionError("pixel_select: queries " + shape_str(q.shape()) + " vs keys " +
                         shape_str(kg.shape()));
  }
  const T inv_sqrt_d = T(1) / std::sqrt(T(q.dim(-1)));
  Tensor<T> scores = scale(matmul(q, transpose_last(kg)), inv_sqrt_d);  // (B, h, S^2, n, k1 n)
  RoutingTape* tape = active_routing_tape();
  if (tape && tape->replaying()) {
    const IndexTensor& idx = tape->next_replay();
    return {gather(scores, idx, 4), idx};
  }
  auto top = topk(scores, k2, -1);
  if (tape) tape->route(top.indices);
  return {std::move(top.values), std::move(top.indices)};
}

template <typename T>
DssaParts<T> dssa_forward_parts(const Tensor<T>& x, const DssaParams<T>& params,
                                const DssaConfig& cfg, AttentionTrace* trace) {
  if (x.rank() != 4) throw DimensionError("dssa_forward: expected (B, H, W, C), got " +
                                          shape_str(x.shape()));
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (cfg.regions == 0 || H % cfg.regions != 0 || W % cfg.regions != 0) {
    throw ParameterError("dssa_forward: " + std::to_string(H) + "x" + std::to_string(W) +
                         " not divisible by S=" + std::to_string(cfg.regions));
  }
  cfg.validate(C, H, W);
  const std::size_t S = cfg.regions, R = S * S, n = cfg.tokens_per_region(H, W);
  const std::size_t heads = cfg.heads, d = cfg.head_dim, k1 = cfg.k1, k2 = cfg.k2(H, W);

  Tensor<T> xr = to_regions(x, S);
  Qkv<T> qkv = project_qkv(xr, params.wq, params.wk, params.wv);
  RegionRoute<T> route = region_route(qkv.q, qkv.k, cfg);
  GatheredKv<T> kv = gather_regions(qkv.k, qkv.v, route.indices);

  auto split_heads = [&](const Tensor<T>& t, std::size_t tokens) {
    return permute(reshape(t, Shape{B, R, tokens, heads, d}), {0, 3, 1, 2, 4});
  };
  Tensor<T> qh = split_heads(qkv.q, n);
  Tensor<T> kgh = split_heads(kv.k, k1 * n);
  Tensor<T> vgh = split_heads(kv.v, k1 * n);

  PixelSelection<T> sel = pixel_select(qh, kgh, k2);
  Tensor<T> weights = softmax(sel.scores, -1);
  Tensor<T> vgg = gather(vgh, sel.indices.reshaped(Shape{B, heads, R, n * k2}), 3);
  vgg = reshape(vgg, Shape{B, heads, R, n, k2, d});
  Tensor<T> o = matmul(reshape(weights, Shape{B, heads, R, n, 1, k2}), vgg);
  o = permute(reshape(o, Shape{B, heads, R, n, d}), {0, 2, 3, 1, 4});
  Tensor<T> attention = from_regions(reshape(o, Shape{B, R, n, C}), S, H, W);

  Tensor<T> local = params.lce(from_regions(qkv.v, S, H, W));

  if (trace) {
    trace->region_scores.assign(route.scores.data().begin(), route.scores.data().end());
    trace->region_indices = route.indices;
    trace->pixel_indices = sel.indices;
    const std::uint64_t per_head_image = std::uint64_t(B) * heads;
    trace->score_evaluations = sel.indices.numel() / k2 * (k1 * n) / per_head_image;
    trace->retained_pairs = sel.indices.numel() / per_head_image;
    const double dense = double(H * W) * double(H * W);
    trace->kept_fraction = double(trace->retained_pairs) / dense;
  }
  return {attention, local, add(attention, local)};
}

template <typename T>
Tensor<T> dssa_forward(const Tensor<T>& x, const DssaParams<T>& params, const DssaConfig& cfg,
                       AttentionTrace* trace) {
  return dssa_forward_parts(x, params, cfg, trace).output;
}

namespace {
thread_local RoutingTape* g_tape = nullptr;
}

void RoutingTape::start_recording() {
  mode_ = Mode::Record;
  entries_.clear();
  cursor_ = 0;
}

void RoutingTape::start_replay() {
  mode_ = Mode::Replay;
  cursor_ = 0;
}

const IndexTensor& RoutingTape::route(const IndexTensor& fresh) {
  entries_.push_back(fresh);
  return entries_.back();
}

const IndexTensor& RoutingTape::next_replay() {
  if (cursor_ >= entries_.size()) {
    throw ContractError("routing tape exhausted: replayed more selections than recorded");
  }
  return entries_[cursor_++];
}

RoutingTapeScope::RoutingTapeScope(RoutingTape& tape) : previous_(g_tape) { g_tape = &tape; }
RoutingTapeScope::~RoutingTapeScope() { g_tape = previous_; }

RoutingTape* active_routing_tape() { return g_tape; }

#define DSSA_INSTANTIATE(T)                                                                    \
  template struct DssaParams<T>;                                                               \
  template Qkv<T> project_qkv(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                              const Tensor<T>&);                                               \
  template RegionRoute<T> region_route(const Tensor<T>&, const Tensor<T>&, const DssaConfig&); \
  template GatheredKv<T> gather_regions(const Tensor<T>&, const Tensor<T>&,                    \
                                        const IndexTensor&);                                   \
  template PixelSelection<T> pixel_select(const Tensor<T>&, const Tensor<T>&, std::size_t);    \
  template DssaParts<T> dssa_forward_parts(const Tensor<T>&, const DssaParams<T>&,             \
                                           const DssaConfig&, AttentionTrace*);                \
  template Tensor<T> dssa_forward(const Tensor<T>&, const DssaParams<T>&, const DssaConfig&,   \
                                  AttentionTrace*);

DSSA_INSTANTIATE(float)
DSSA_INSTANTIATE(double)
#undef DSSA_INSTANTIATE

}  // namespace dssa
