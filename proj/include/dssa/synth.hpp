#pragma once

// Synthetic intrapartum-like scenes: a large, nearly round fetal head (FH)
// and an elongated pubic symphysis (PS) whose inferior vertex points toward
// the head, on a speckled background with an intensity gradient.
//
// Pixel (x, y) belongs to an ellipse when its center (x, y) satisfies the
// ellipse inequality; PS is painted after FH, and scenes where the two
// would overlap are redrawn, so masks are exact re-rasterizations of the
// recorded ellipses.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dssa/biometry.hpp"
#include "dssa/io/image.hpp"

namespace dssa {

struct SceneGeometry {
  Ellipse ps;
  Ellipse fh;
  Vec2 ps_inferior;
  Vec2 ps_superior;
  double aop_deg = 0;  // closed form against the exact FH ellipse
  double hsd_px = 0;   // inferior vertex to the nearest FH boundary pixel
};

struct SyntheticCase {
  std::string name;
  io::Image image;
  LabelMask mask;
  SceneGeometry geometry;
};

bool inside_ellipse(const Ellipse& e, double x, double y);
LabelMask rasterize_scene(const Ellipse& ps, const Ellipse& fh, std::size_t size);

// size must be a multiple of 32.
SyntheticCase generate_case(std::size_t size, std::mt19937_64& rng, std::string name);

/// Writes images/NAME.pgm, masks/NAME.pgm and manifest.json under `dir`.
std::vector<SyntheticCase> write_synthetic_dataset(const std::filesystem::path& dir,
                                                   std::size_t count, std::size_t size,
                                                   std::uint64_t seed);

}  // namespace dssa
