#pragma once

// Angle of progression (AoP) and head-symphysis distance (HSD) from label
// masks.
//
// Both structures are summarized by direct least-squares ellipse fits to
// their contours. The pubic symphysis (PS) axis is the major axis of its
// ellipse; its inferior end is the vertex nearer the fetal head (FH)
// centroid. AoP is the angle at that vertex between the ray back along the
// PS axis (toward the superior vertex) and the ray tangent to the FH ellipse,
// taking the tangent that gives the larger angle. HSD is the distance from
// the inferior vertex to the nearest FH boundary pixel center.

#include <numbers>
#include <vector>

#include "dssa/metrics.hpp"

namespace dssa {

struct Vec2 {
  double x = 0;
  double y = 0;
};

struct Ellipse {
  Vec2 center;
  double semi_major = 0;
  double semi_minor = 0;
  double angle = 0;  // major axis vs +x, in [0, pi)

  // Point at parameter t: center + R(angle) (a cos t, b sin t).
  Vec2 point_at(double t) const;
  Vec2 major_vertex(bool positive) const { return point_at(positive ? 0.0 : std::numbers::pi); }
};

/// Direct least-squares fit of an ellipse-constrained conic (Halir and
/// Flusser's stable form) on centered, scaled coordinates. Needs at least 6
/// points not all on one line; throws FitError otherwise or when the best
/// conic is not a real ellipse.
Ellipse fit_ellipse(const std::vector<Vec2>& points);

/// Contour of a class region as the midpoints of its pixel edges that face
/// another class or the image border.
std::vector<Vec2> contour_points(const LabelMask& mask, std::uint8_t cls);

struct BiometryResult {
  double aop_deg = 0;
  double hsd = 0;  // millimetres when the FH mask carries a spacing
  Ellipse ps_ellipse;
  Ellipse fh_ellipse;
  Vec2 ps_inferior;
  Vec2 ps_superior;
};

/// AoP in degrees at `inferior` for a PS axis through `superior`, against
/// the FH ellipse. Throws DegenerateGeometryError when `inferior` lies
/// inside the ellipse.
double aop_from_geometry(const Vec2& inferior, const Vec2& superior, const Ellipse& fh);

/// Distance from `point` to the nearest FH boundary pixel center, times the
/// mask spacing. Throws UndefinedBiometryError if FH is absent.
double hsd_from_point(const Vec2& point, const LabelMask& fh);

// PS pixels are read from `ps` (label 1), FH pixels from `fh` (label 2); a
// combined mask can be passed as both. Missing classes throw
// UndefinedBiometryError.
BiometryResult measure_biometry(const LabelMask& ps, const LabelMask& fh);
double compute_aop(const LabelMask& ps, const LabelMask& fh);
double compute_hsd(const LabelMask& ps, const LabelMask& fh);

struct BiometryError {
  double aop_deg = 0;
  double hsd = 0;
};

BiometryError biometry_error(const BiometryResult& pred, const BiometryResult& truth);

}  // namespace dssa
