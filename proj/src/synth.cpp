#include "dssa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <optional>

namespace dssa {

namespace {

constexpr double kPi = std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Axis-aligned half extents of a rotated ellipse.
Vec2 half_extent(const Ellipse& e) {
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  return {std::hypot(e.semi_major * c, e.semi_minor * s),
          std::hypot(e.semi_major * s, e.semi_minor * c)};
}

std::optional<SceneGeometry> try_geometry(std::size_t size, std::mt19937_64& rng) {
  const double k = double(size) / 64.0;
  SceneGeometry g;
  const double theta = uniform(rng, 0, 2 * kPi);
  const Vec2 axis{std::cos(theta), std::sin(theta)};

  g.ps.semi_major = uniform(rng, 8.0, 11.0) * k;
  g.ps.semi_minor = uniform(rng, 3.0, 4.2) * k;
  g.ps.angle = std::fmod(theta, kPi);
  g.ps.center = {0, 0};
  g.ps_inferior = {g.ps.semi_major * axis.x, g.ps.semi_major * axis.y};
  g.ps_superior = {-g.ps_inferior.x, -g.ps_inferior.y};

  g.fh.semi_major = uniform(rng, 13.0, 17.0) * k;
  g.fh.semi_minor = g.fh.semi_major * uniform(rng, 0.8, 1.0);
  g.fh.angle = uniform(rng, 0, kPi);
  const double delta = uniform(rng, -0.6, 0.6);
  const double gap = uniform(rng, 2.0, 7.0) * k;
  const double reach = g.fh.semi_major + gap;
  const Vec2 toward{std::cos(theta + delta), std::sin(theta + delta)};
  g.fh.center = {g.ps_inferior.x + reach * toward.x, g.ps_inferior.y + reach * toward.y};

  // Place the pair so both ellipses clear the border by two pixels.
  const Vec2 hp = half_extent(g.ps), hf = half_extent(g.fh);
  const double x0 = std::min(g.ps.center.x - hp.x, g.fh.center.x - hf.x);
  const double x1 = std::max(g.ps.center.x + hp.x, g.fh.center.x + hf.x);
  const double y0 = std::min(g.ps.center.y - hp.y, g.fh.center.y - hf.y);
  const double y1 = std::max(g.ps.center.y + hp.y, g.fh.center.y + hf.y);
  const double margin = 2.0, span = double(size - 1) - 2 * margin;
  if (x1 - x0 > span || y1 - y0 > span) return std::nullopt;
  const double tx = uniform(rng, margin - x0, margin + span - x1);
  const double ty = uniform(rng, margin - y0, margin + span - y1);
  for (Vec2* p : {&g.ps.center, &g.fh.center, &g.ps_inferior, &g.ps_superior}) {
    p->x += tx;
    p->y += ty;
  }

  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      if (inside_ellipse(g.ps, double(x), double(y)) && inside_ellipse(g.fh, double(x), double(y))) {
        return std::nullopt;
      }
    }
  }
  return g;
}

io::Image render(const LabelMask& mask, std::mt19937_64& rng) {
  const std::size_t n = mask.width;
  io::Image img{n, n, 1, std::vector<std::uint8_t>(n * n)};
  const double gdir = uniform(rng, 0, 2 * kPi);
  const double gx = std::cos(gdir), gy = std::sin(gdir);
  const double base = uniform(rng, 25, 45), slope = uniform(rng, 20, 50);
  const double fh_level = uniform(rng, 55, 80), ps_level = uniform(rng, 100, 130);
  std::normal_distribution<double> speckle(0.0, 0.25), noise(0.0, 6.0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double t = 0.5 + 0.5 * ((double(x) / double(n) - 0.5) * gx +
                                    (double(y) / double(n) - 0.5) * gy) * std::numbers::sqrt2;
      double v = base + slope * t;
      const auto l = mask.at(x, y);
      if (l == kFetalHead) v += fh_level;
      if (l == kPubicSymphysis) v += ps_level;
      v = v * std::exp(speckle(rng)) + noise(rng);
      img.pixels[y * n + x] = std::uint8_t(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return img;
}

nlohmann::json ellipse_json(const Ellipse& e) {
  return {{"cx", e.center.x}, {"cy", e.center.y}, {"semi_major", e.semi_major},
          {"semi_minor", e.semi_minor}, {"angle", e.angle}};
}

}  // namespace

bool inside_ellipse(const Ellipse& e, double x, double y) {
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double dx = x - e.center.x, dy = y - e.center.y;
  const double u = (c * dx + s * dy) / e.semi_major, v = (-s * dx + c * dy) / e.semi_minor;
  return u * u + v * v <= 1.0;
}

LabelMask rasterize_scene(const Ellipse& ps, const Ellipse& fh, std::size_t size) {
  LabelMask m(size, size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      if (inside_ellipse(fh, double(x), double(y))) m.at(x, y) = kFetalHead;
      if (inside_ellipse(ps, double(x), double(y))) m.at(x, y) = kPubicSymphysis;
    }
  }
  return m;
}

SyntheticCase generate_case(std::size_t size, std::mt19937_64& rng, std::string name) {
  if (size == 0 || size % 32 != 0) {
    throw ParameterError("synthetic image size " + std::to_string(size) +
                         " must be a positive multiple of 32");
  }
  std::optional<SceneGeometry> g;
  while (!(g = try_geometry(size, rng))) {
  }
  SyntheticCase c;
  c.name = std::move(name);
  c.geometry = *g;
  c.mask = rasterize_scene(g->ps, g->fh, size);
  c.geometry.aop_deg = aop_from_geometry(g->ps_inferior, g->ps_superior, g->fh);
  c.geometry.hsd_px = hsd_from_point(g->ps_inferior, c.mask);
  c.image = render(c.mask, rng);
  return c;
}

std::vector<SyntheticCase> write_synthetic_dataset(const std::filesystem::path& dir,
                                                   std::size_t count, std::size_t size,
                                                   std::uint64_t seed) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::mt19937_64 rng(seed);
  std::vector<SyntheticCase> cases;
  nlohmann::json manifest;
  manifest["size"] = size;
  manifest["seed"] = seed;
  manifest["cases"] = nlohmann::json::array();
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "case_%04zu", i);
    SyntheticCase c = generate_case(size, rng, name);
    io::write_image(dir / "images" / (c.name + ".pgm"), c.image);
    io::write_mask(dir / "masks" / (c.name + ".pgm"), c.mask);
    const auto& g = c.geometry;
    manifest["cases"].push_back({{"name", c.name},
                                 {"ps", ellipse_json(g.ps)},
                                 {"fh", ellipse_json(g.fh)},
                                 {"ps_inferior", {g.ps_inferior.x, g.ps_inferior.y}},
                                 {"ps_superior", {g.ps_superior.x, g.ps_superior.y}},
                                 {"aop_deg", g.aop_deg},
                                 {"hsd_px", g.hsd_px}});
    cases.push_back(std::move(c));
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
  return cases;
}

}  // namespace dssa
