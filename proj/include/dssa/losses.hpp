#pragma once

// Hybrid dice / cross-entropy training loss.
//
// The tensor forms take class probabilities shaped (..., K) (softmax output)
// and one label per leading position. Dice is computed per foreground class
// 1..K-1 over every pixel of the batch, then averaged; cross-entropy is the
// mean of -log p[label] with p clipped to [1e-7, 1 - 1e-7].

#include <cstdint>
#include <span>
#include <vector>

#include "dssa/metrics.hpp"
#include "dssa/tensor.hpp"

namespace dssa {

inline constexpr double kDiceSmooth = 1e-6;
inline constexpr double kProbClip = 1e-7;

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, std::span<const std::uint8_t> labels,
                    double eps = kDiceSmooth);
template <typename T>
Tensor<T> ce_loss(const Tensor<T>& probs, std::span<const std::uint8_t> labels,
                  double clip = kProbClip);
// 0.5 * (dice + ce)
template <typename T>
Tensor<T> hybrid_loss(const Tensor<T>& probs, std::span<const std::uint8_t> labels);

/// Per-pixel class probabilities of one image, (height, width, classes).
struct ProbMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t classes = kNumClasses;
  std::vector<double> probs;

  // Throws DataError unless every pixel's probabilities sum to 1 +- 1e-6.
  void validate() const;
  static ProbMap one_hot(const LabelMask& mask, std::size_t classes = kNumClasses);
  static ProbMap uniform(std::size_t width, std::size_t height, std::size_t classes = kNumClasses);
};

double dice_loss(const ProbMap& p, const LabelMask& g);
double ce_loss(const ProbMap& p, const LabelMask& g);
double hybrid_loss(const ProbMap& p, const LabelMask& g);

}  // namespace dssa
