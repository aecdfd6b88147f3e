#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dssa/errors.hpp"
#include "dssa/kernels.hpp"

namespace dssa {

inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kPubicSymphysis = 1;
inline constexpr std::uint8_t kFetalHead = 2;
inline constexpr std::size_t kNumClasses = 3;

/// Per-pixel class labels, row-major; spacing is millimetres per pixel.
struct LabelMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> labels;
  double spacing = 1.0;

  LabelMask() = default;
  LabelMask(std::size_t w, std::size_t h, std::uint8_t fill = kBackground, double spacing_mm = 1.0)
      : width(w), height(h), labels(w * h, fill), spacing(spacing_mm) {}

  std::uint8_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }
  std::uint8_t& at(std::size_t x, std::size_t y) { return labels[y * width + x]; }
  std::size_t count(std::uint8_t cls) const;

  // Throws DataError on zero extents, size mismatch or labels >= classes.
  void validate(std::size_t classes = kNumClasses) const;
};

using Point = kernels::GridPoint;

/// Class pixels with at least one 4-neighbour outside the class; the image
/// border counts as outside.
std::vector<Point> boundary(const LabelMask& mask, std::uint8_t cls);

// 2|A n B| / (|A| + |B|) on the class-cls pixel sets; 1 when both are empty.
double dsc(const LabelMask& a, const LabelMask& b, std::uint8_t cls);
// Pixel-pooled DSC over the foreground classes: 2 sum|A_c n B_c| / sum(|A_c| + |B_c|).
double dsc_pooled(const LabelMask& a, const LabelMask& b);

/// Symmetric Hausdorff distance between the class boundaries, in mm.
/// Throws UndefinedMetricError when either boundary is empty.
double hausdorff(const LabelMask& a, const LabelMask& b, std::uint8_t cls);

/// Average surface distance, 0.5 * (mean_a min_b d + mean_b min_a d), in mm.
double asd(const LabelMask& a, const LabelMask& b, std::uint8_t cls);

struct ClassScores {
  double dsc = 0;
  double hd = 0;
  double asd = 0;
};

struct SegmentationScores {
  ClassScores ps, fh;
  double mean_dsc = 0;    // average of the PS and FH values
  double pooled_dsc = 0;  // pixel-pooled over both classes
  double mean_hd = 0;
  double mean_asd = 0;
};

SegmentationScores score_segmentation(const LabelMask& pred, const LabelMask& truth);

}  // namespace dssa
