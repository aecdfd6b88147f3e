#include "dssa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dssa {

namespace {

void require_same_extent(const LabelMask& a, const LabelMask& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw DimensionError(std::string(what) + ": extents " + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height));
  }
  if (a.spacing != b.spacing) {
    throw ParameterError(std::string(what) + ": pixel spacing differs between masks");
  }
}

// Nearest-boundary distances (in pixels) from every point of `from` to `to`.
std::vector<double> directed(const std::vector<Point>& from, const std::vector<Point>& to) {
  std::vector<std::int64_t> sq(from.size());
  kernels::min_sq_distances(from.data(), from.size(), to.data(), to.size(), sq.data());
  std::vector<double> d(sq.size());
  for (std::size_t i = 0; i < sq.size(); ++i) d[i] = std::sqrt(double(sq[i]));
  return d;
}

struct Surfaces {
  std::vector<Point> a, b;
};

Surfaces surfaces(const LabelMask& a, const LabelMask& b, std::uint8_t cls, const char* what) {
  require_same_extent(a, b, what);
  Surfaces s{boundary(a, cls), boundary(b, cls)};
  if (s.a.empty() || s.b.empty()) {
    throw UndefinedMetricError(std::string(what) + ": class " + std::to_string(cls) +
                               " is absent from " + (s.a.empty() ? "the first" : "the second") +
                               " mask");
  }
  return s;
}

}  // namespace

std::size_t LabelMask::count(std::uint8_t cls) const {
  return std::size_t(std::count(labels.begin(), labels.end(), cls));
}

void LabelMask::validate(std::size_t classes) const {
  if (width == 0 || height == 0) throw DataError("label mask has zero extent");
  if (labels.size() != width * height) {
    throw DataError("label mask holds " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(width) + "x" + std::to_string(height));
  }
  for (auto l : labels) {
    if (l >= classes) throw DataError("label " + std::to_string(l) + " out of range");
  }
  if (!(spacing > 0)) throw DataError("pixel spacing must be positive");
}

std::vector<Point> boundary(const LabelMask& m, std::uint8_t cls) {
  std::vector<Point> out;
  const long W = long(m.width), H = long(m.height);
  auto inside = [&](long x, long y) {
    return x >= 0 && y >= 0 && x < W && y < H && m.labels[y * W + x] == cls;
  };
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      if (!inside(x, y)) continue;
      if (!inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) || !inside(x, y + 1)) {
        out.push_back({int(x), int(y)});
      }
    }
  }
  return out;
}

double dsc(const LabelMask& a, const LabelMask& b, std::uint8_t cls) {
  require_same_extent(a, b, "dsc");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const bool ia = a.labels[i] == cls, ib = b.labels[i] == cls;
    na += ia;
    nb += ib;
    both += ia && ib;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * double(both) / double(na + nb);
}

double dsc_pooled(const LabelMask& a, const LabelMask& b) {
  require_same_extent(a, b, "dsc_pooled");
  std::size_t total = 0, both = 0;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    total += (a.labels[i] != kBackground) + (b.labels[i] != kBackground);
    both += a.labels[i] != kBackground && a.labels[i] == b.labels[i];
  }
  if (total == 0) return 1.0;
  return 2.0 * double(both) / double(total);
}

double hausdorff(const LabelMask& a, const LabelMask& b, std::uint8_t cls) {
  Surfaces s = surfaces(a, b, cls, "hausdorff");
  auto ab = directed(s.a, s.b), ba = directed(s.b, s.a);
  const double worst = std::max(*std::max_element(ab.begin(), ab.end()),
                                *std::max_element(ba.begin(), ba.end()));
  return worst * a.spacing;
}

double asd(const LabelMask& a, const LabelMask& b, std::uint8_t cls) {
  Surfaces s = surfaces(a, b, cls, "asd");
  auto mean = [](const std::vector<double>& v) {
    double t = 0;
    for (double x : v) t += x;
    return t / double(v.size());
  };
  return 0.5 * (mean(directed(s.a, s.b)) + mean(directed(s.b, s.a))) * a.spacing;
}

SegmentationScores score_segmentation(const LabelMask& pred, const LabelMask& truth) {
  SegmentationScores s;
  auto one = [&](std::uint8_t cls) {
    return ClassScores{dsc(pred, truth, cls), hausdorff(pred, truth, cls), asd(pred, truth, cls)};
  };
  s.ps = one(kPubicSymphysis);
  s.fh = one(kFetalHead);
  s.mean_dsc = 0.5 * (s.ps.dsc + s.fh.dsc);
  s.pooled_dsc = dsc_pooled(pred, truth);
  s.mean_hd = 0.5 * (s.ps.hd + s.fh.hd);
  s.mean_asd = 0.5 * (s.ps.asd + s.fh.asd);
  return s;
}

}  // namespace dssa
