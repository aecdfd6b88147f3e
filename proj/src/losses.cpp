#include "dssa/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dssa/ops.hpp"
#include "op_support.hpp"

namespace dssa {

using detail::make_result;
using detail::parent_grad;

namespace {

template <typename T>
std::size_t check_labels(const Tensor<T>& probs, std::span<const std::uint8_t> labels,
                         const char* what) {
  if (probs.rank() < 1 || probs.dim(-1) < 2) {
    throw DimensionError(std::string(what) + ": probabilities " + shape_str(probs.shape()) +
                         " need a class axis of at least 2");
  }
  const std::size_t k = probs.dim(-1);
  if (probs.numel() / k != labels.size()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(labels.size()) +
                         " labels for probabilities " + shape_str(probs.shape()));
  }
  for (auto l : labels) {
    if (l >= k) throw DataError(std::string(what) + ": label " + std::to_string(l) +
                                " out of range");
  }
  return k;
}

}  // namespace

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, std::span<const std::uint8_t> labels, double eps) {
  const std::size_t K = check_labels(probs, labels, "dice_loss");
  const std::size_t N = labels.size();
  std::vector<double> inter(K, 0.0), psum(K, 0.0), gsum(K, 0.0);
  const T* p = probs.data().data();
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t c = 1; c < K; ++c) psum[c] += double(p[i * K + c]);
    if (labels[i] > 0) {
      inter[labels[i]] += double(p[i * K + labels[i]]);
      gsum[labels[i]] += 1.0;
    }
  }
  const double fg = double(K - 1);
  double loss = 0;
  for (std::size_t c = 1; c < K; ++c) {
    loss += 1.0 - (2.0 * inter[c] + eps) / (psum[c] + gsum[c] + eps);
  }
  loss /= fg;
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  return make_result<T>(Shape{}, {T(loss)}, {&probs},
                        [=, lab = std::move(lab)](Node<T>& self) {
                          T* g = parent_grad(self, 0);
                          if (!g) return;
                          const double up = double(self.grad[0]) / fg;
                          // d/dp of -(2I + eps) / (P + G + eps)
                          std::vector<double> d_in(K), d_p(K);
                          for (std::size_t c = 1; c < K; ++c) {
                            const double den = psum[c] + gsum[c] + eps;
                            d_in[c] = -2.0 / den;
                            d_p[c] = (2.0 * inter[c] + eps) / (den * den);
                          }
                          for (std::size_t i = 0; i < N; ++i) {
                            for (std::size_t c = 1; c < K; ++c) {
                              double d = d_p[c];
                              if (lab[i] == c) d += d_in[c];
                              g[i * K + c] += T(up * d);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> ce_loss(const Tensor<T>& probs, std::span<const std::uint8_t> labels, double clip) {
  const std::size_t K = check_labels(probs, labels, "ce_loss");
  const std::size_t N = labels.size();
  const T* p = probs.data().data();
  double loss = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double v = std::clamp(double(p[i * K + labels[i]]), clip, 1.0 - clip);
    loss -= std::log(v);
  }
  loss /= double(N);
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  return make_result<T>(Shape{}, {T(loss)}, {&probs},
                        [=, lab = std::move(lab)](Node<T>& self) {
                          T* g = parent_grad(self, 0);
                          if (!g) return;
                          const double up = double(self.grad[0]) / double(N);
                          const auto& pv = detail::parent_values(self, 0);
                          for (std::size_t i = 0; i < N; ++i) {
                            const double v = double(pv[i * K + lab[i]]);
                            if (v <= clip || v >= 1.0 - clip) continue;
                            g[i * K + lab[i]] += T(-up / v);
                          }
                        });
}

template <typename T>
Tensor<T> hybrid_loss(const Tensor<T>& probs, std::span<const std::uint8_t> labels) {
  return scale(add(dice_loss(probs, labels), ce_loss(probs, labels)), T(0.5));
}

template Tensor<float> dice_loss(const Tensor<float>&, std::span<const std::uint8_t>, double);
template Tensor<double> dice_loss(const Tensor<double>&, std::span<const std::uint8_t>, double);
template Tensor<float> ce_loss(const Tensor<float>&, std::span<const std::uint8_t>, double);
template Tensor<double> ce_loss(const Tensor<double>&, std::span<const std::uint8_t>, double);
template Tensor<float> hybrid_loss(const Tensor<float>&, std::span<const std::uint8_t>);
template Tensor<double> hybrid_loss(const Tensor<double>&, std::span<const std::uint8_t>);

void ProbMap::validate() const {
  if (width == 0 || height == 0 || classes < 2) throw DataError("probability map has no extent");
  if (probs.size() != width * height * classes) {
    throw DataError("probability map holds " + std::to_string(probs.size()) + " values for " +
                    std::to_string(width) + "x" + std::to_string(height) + "x" +
                    std::to_string(classes));
  }
  for (std::size_t i = 0; i < width * height; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < classes; ++c) s += probs[i * classes + c];
    if (std::abs(s - 1.0) > 1e-6) {
      throw DataError("probabilities at pixel " + std::to_string(i) + " sum to " +
                      std::to_string(s));
    }
  }
}

ProbMap ProbMap::one_hot(const LabelMask& mask, std::size_t classes) {
  ProbMap p{mask.width, mask.height, classes, std::vector<double>(mask.labels.size() * classes)};
  for (std::size_t i = 0; i < mask.labels.size(); ++i) p.probs[i * classes + mask.labels[i]] = 1;
  return p;
}

ProbMap ProbMap::uniform(std::size_t width, std::size_t height, std::size_t classes) {
  return {width, height, classes,
          std::vector<double>(width * height * classes, 1.0 / double(classes))};
}

namespace {

Tensor<double> as_tensor(const ProbMap& p, const LabelMask& g, const char* what) {
  p.validate();
  g.validate(p.classes);
  if (p.width != g.width || p.height != g.height) {
    throw DimensionError(std::string(what) + ": probability map " + std::to_string(p.width) +
                         "x" + std::to_string(p.height) + " vs mask " + std::to_string(g.width) +
                         "x" + std::to_string(g.height));
  }
  return Tensor<double>(Shape{p.height, p.width, p.classes}, p.probs);
}

}  // namespace

double dice_loss(const ProbMap& p, const LabelMask& g) {
  return dice_loss(as_tensor(p, g, "dice_loss"), std::span(g.labels)).item();
}

double ce_loss(const ProbMap& p, const LabelMask& g) {
  return ce_loss(as_tensor(p, g, "ce_loss"), std::span(g.labels)).item();
}

double hybrid_loss(const ProbMap& p, const LabelMask& g) {
  return 0.5 * (dice_loss(p, g) + ce_loss(p, g));
}

}  // namespace dssa
