#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dssa/metrics.hpp"

namespace dssa::io {

/// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  // Luma (ITU-R 601 weights) for RGB, identity for gray.
  Image to_gray() const;
};

// Format chosen by extension: .pgm / .ppm (binary netpbm) or .png.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img);

// Labels are stored literally (0, 1, 2) as a single-channel image.
LabelMask read_mask(const std::filesystem::path& path, double spacing = 1.0);
void write_mask(const std::filesystem::path& path, const LabelMask& mask);

// Half-pixel bilinear resampling (gray or RGB).
Image resize_image(const Image& img, std::size_t width, std::size_t height);
// Nearest-neighbour resampling, so no new labels appear.
LabelMask resize_mask(const LabelMask& mask, std::size_t width, std::size_t height);

}  // namespace dssa::io
