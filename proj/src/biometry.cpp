#include "dssa/biometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace dssa {

Vec2 Ellipse::point_at(double t) const {
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = semi_major * std::cos(t), v = semi_minor * std::sin(t);
  return {center.x + c * u - s * v, center.y + s * u + c * v};
}

Ellipse fit_ellipse(const std::vector<Vec2>& points) {
  const std::size_t n = points.size();
  if (n < 6) throw FitError("fit_ellipse: need at least 6 points, got " + std::to_string(n));
  double mx = 0, my = 0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= double(n);
  my /= double(n);
  double spread = 0;
  for (const auto& p : points) spread += std::hypot(p.x - mx, p.y - my);
  spread /= double(n);
  if (!(spread > 0)) throw FitError("fit_ellipse: all points coincide");

  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (points[i].x - mx) / spread, y = (points[i].y - my) / spread;
    d1.row(i) << x * x, x * y, y * y;
    d2.row(i) << x, y, 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
  if (lu.rank() < 3) throw FitError("fit_ellipse: points are collinear");
  const Eigen::Matrix3d t = -lu.solve(s2.transpose());
  Eigen::Matrix3d m = s1 + s2 * t;
  // Premultiply by the inverse of the constraint matrix [[0,0,2],[0,-1,0],[2,0,0]].
  Eigen::Matrix3d reduced;
  reduced.row(0) = m.row(2) / 2.0;
  reduced.row(1) = -m.row(1);
  reduced.row(2) = m.row(0) / 2.0;
  Eigen::EigenSolver<Eigen::Matrix3d> eig(reduced);
  int best = -1;
  double best_cond = 0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d v = eig.eigenvectors().col(i).real();
    const double cond = 4 * v(0) * v(2) - v(1) * v(1);
    if (cond > best_cond) {
      best_cond = cond;
      best = i;
    }
  }
  if (best < 0) throw FitError("fit_ellipse: no elliptic solution for these points");
  const Eigen::Vector3d a1 = eig.eigenvectors().col(best).real();
  const Eigen::Vector3d a2 = t * a1;

  double A = a1(0), B = a1(1), C = a1(2), D = a2(0), E = a2(1), F = a2(2);
  Eigen::Matrix2d q;
  q << 2 * A, B, B, 2 * C;
  const Eigen::Vector2d c0 = q.fullPivLu().solve(Eigen::Vector2d(-D, -E));
  const double f0 = A * c0(0) * c0(0) + B * c0(0) * c0(1) + C * c0(1) * c0(1) + D * c0(0) +
                    E * c0(1) + F;
  Eigen::Matrix2d quad;
  quad << A, B / 2, B / 2, C;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> se(quad);
  const double l0 = se.eigenvalues()(0), l1 = se.eigenvalues()(1);
  const double r0 = -f0 / l0, r1 = -f0 / l1;
  if (!(r0 > 0 && r1 > 0) || !std::isfinite(r0) || !std::isfinite(r1)) {
    throw FitError("fit_ellipse: fitted conic is not a real ellipse");
  }
  // The smaller eigenvalue belongs to the longer axis.
  const double major = std::sqrt(std::max(r0, r1)), minor = std::sqrt(std::min(r0, r1));
  const Eigen::Vector2d dir = r0 >= r1 ? se.eigenvectors().col(0) : se.eigenvectors().col(1);
  double angle = std::atan2(dir(1), dir(0));
  if (angle < 0) angle += std::numbers::pi;
  if (angle >= std::numbers::pi) angle -= std::numbers::pi;

  Ellipse e;
  e.center = {c0(0) * spread + mx, c0(1) * spread + my};
  e.semi_major = major * spread;
  e.semi_minor = minor * spread;
  e.angle = angle;
  return e;
}

std::vector<Vec2> contour_points(const LabelMask& mask, std::uint8_t cls) {
  std::vector<Vec2> out;
  const long W = long(mask.width), H = long(mask.height);
  auto inside = [&](long x, long y) {
    return x >= 0 && y >= 0 && x < W && y < H && mask.labels[y * W + x] == cls;
  };
  const long dx[4] = {-1, 1, 0, 0}, dy[4] = {0, 0, -1, 1};
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      if (!inside(x, y)) continue;
      for (int k = 0; k < 4; ++k) {
        if (!inside(x + dx[k], y + dy[k])) out.push_back({x + 0.5 * dx[k], y + 0.5 * dy[k]});
      }
    }
  }
  return out;
}

double aop_from_geometry(const Vec2& inferior, const Vec2& superior, const Ellipse& fh) {
  const double c = std::cos(fh.angle), s = std::sin(fh.angle);
  // Map the point into the frame where the FH ellipse is the unit circle.
  const double rx = inferior.x - fh.center.x, ry = inferior.y - fh.center.y;
  const double u = (c * rx + s * ry) / fh.semi_major;
  const double v = (-s * rx + c * ry) / fh.semi_minor;
  const double dist = std::hypot(u, v);
  if (dist <= 1.0) {
    throw DegenerateGeometryError("AoP: PS inferior point lies inside the FH ellipse");
  }
  const double phi = std::atan2(v, u), spread = std::acos(1.0 / dist);
  const double ax = superior.x - inferior.x, ay = superior.y - inferior.y;
  double best = 0;
  for (double t : {phi + spread, phi - spread}) {
    const Vec2 tp = fh.point_at(t);
    const double bx = tp.x - inferior.x, by = tp.y - inferior.y;
    const double cosang = (ax * bx + ay * by) / (std::hypot(ax, ay) * std::hypot(bx, by));
    best = std::max(best, std::acos(std::clamp(cosang, -1.0, 1.0)));
  }
  return best * 180.0 / std::numbers::pi;
}

double hsd_from_point(const Vec2& point, const LabelMask& fh) {
  const auto surface = boundary(fh, kFetalHead);
  if (surface.empty()) throw UndefinedBiometryError("HSD: fetal head absent from mask");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : surface) best = std::min(best, std::hypot(p.x - point.x, p.y - point.y));
  return best * fh.spacing;
}

namespace {

// Ellipse fits and PS vertices, without the AoP.
BiometryResult locate(const LabelMask& ps, const LabelMask& fh) {
  auto fit = [](const LabelMask& m, std::uint8_t cls, const char* name) {
    auto pts = contour_points(m, cls);
    if (pts.empty()) throw UndefinedBiometryError(std::string("biometry: ") + name + " absent");
    return fit_ellipse(pts);
  };
  BiometryResult r;
  r.ps_ellipse = fit(ps, kPubicSymphysis, "pubic symphysis");
  r.fh_ellipse = fit(fh, kFetalHead, "fetal head");

  double cx = 0, cy = 0;
  std::size_t count = 0;
  for (std::size_t y = 0; y < fh.height; ++y) {
    for (std::size_t x = 0; x < fh.width; ++x) {
      if (fh.at(x, y) != kFetalHead) continue;
      cx += double(x);
      cy += double(y);
      ++count;
    }
  }
  cx /= double(count);
  cy /= double(count);
  const Vec2 v0 = r.ps_ellipse.major_vertex(true), v1 = r.ps_ellipse.major_vertex(false);
  const bool first = std::hypot(v0.x - cx, v0.y - cy) <= std::hypot(v1.x - cx, v1.y - cy);
  r.ps_inferior = first ? v0 : v1;
  r.ps_superior = first ? v1 : v0;
  return r;
}

}  // namespace

BiometryResult measure_biometry(const LabelMask& ps, const LabelMask& fh) {
  BiometryResult r = locate(ps, fh);
  r.aop_deg = aop_from_geometry(r.ps_inferior, r.ps_superior, r.fh_ellipse);
  r.hsd = hsd_from_point(r.ps_inferior, fh);
  return r;
}

double compute_aop(const LabelMask& ps, const LabelMask& fh) {
  return measure_biometry(ps, fh).aop_deg;
}

double compute_hsd(const LabelMask& ps, const LabelMask& fh) {
  return hsd_from_point(locate(ps, fh).ps_inferior, fh);
}

BiometryError biometry_error(const BiometryResult& pred, const BiometryResult& truth) {
  return {std::abs(pred.aop_deg - truth.aop_deg), std::abs(pred.hsd - truth.hsd)};
}

}  // namespace dssa
