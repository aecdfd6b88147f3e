#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dssa/metrics.hpp"

using namespace dssa;

namespace {

// Random blobs: a few filled rectangles and discs of each class.
LabelMask random_blobs(std::size_t size, std::mt19937_64& rng) {
  LabelMask m(size, size);
  std::uniform_int_distribution<int> pos(0, int(size) - 1), extent(1, int(size) / 2),
      shape(0, 1), count(1, 3);
  for (std::uint8_t cls : {kFetalHead, kPubicSymphysis}) {
    for (int k = count(rng); k > 0; --k) {
      const int cx = pos(rng), cy = pos(rng), r = extent(rng), s = extent(rng);
      const bool disc = shape(rng);
      for (int y = 0; y < int(size); ++y)
        for (int x = 0; x < int(size); ++x) {
          const bool in = disc ? (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r
                               : std::abs(x - cx) <= r && std::abs(y - cy) <= s;
          if (in) m.at(std::size_t(x), std::size_t(y)) = cls;
        }
    }
  }
  return m;
}

bool is_boundary(const LabelMask& m, int x, int y, std::uint8_t cls) {
  if (m.at(std::size_t(x), std::size_t(y)) != cls) return false;
  const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
  for (int k = 0; k < 4; ++k) {
    const int nx = x + dx[k], ny = y + dy[k];
    if (nx < 0 || ny < 0 || nx >= int(m.width) || ny >= int(m.height)) return true;
    if (m.at(std::size_t(nx), std::size_t(ny)) != cls) return true;
  }
  return false;
}

std::vector<std::pair<int, int>> brute_boundary(const LabelMask& m, std::uint8_t cls) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < int(m.height); ++y)
    for (int x = 0; x < int(m.width); ++x)
      if (is_boundary(m, x, y, cls)) out.push_back({x, y});
  return out;
}

std::vector<double> directed(const std::vector<std::pair<int, int>>& a,
                             const std::vector<std::pair<int, int>>& b) {
  std::vector<double> out;
  for (auto [ax, ay] : a) {
    double best = std::numeric_limits<double>::infinity();
    for (auto [bx, by] : b) best = std::min(best, std::hypot(double(ax - bx), double(ay - by)));
    out.push_back(best);
  }
  return out;
}

double brute_hd(const LabelMask& a, const LabelMask& b, std::uint8_t cls) {
  const auto ba = brute_boundary(a, cls), bb = brute_boundary(b, cls);
  const auto ab = directed(ba, bb), ba_ = directed(bb, ba);
  return std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba_.begin(), ba_.end())) *
         a.spacing;
}

double brute_asd(const LabelMask& a, const LabelMask& b, std::uint8_t cls) {
  const auto ba = brute_boundary(a, cls), bb = brute_boundary(b, cls);
  const auto ab = directed(ba, bb), ba_ = directed(bb, ba);
  double sa = 0, sb = 0;
  for (double v : ab) sa += v;
  for (double v : ba_) sb += v;
  return 0.5 * (sa / double(ab.size()) + sb / double(ba_.size())) * a.spacing;
}

double brute_dsc(const LabelMask& a, const LabelMask& b, std::uint8_t cls) {
  double inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    inter += a.labels[i] == cls && b.labels[i] == cls;
    na += a.labels[i] == cls;
    nb += b.labels[i] == cls;
  }
  return na + nb == 0 ? 1.0 : 2 * inter / (na + nb);
}

}  // namespace

TEST_CASE("dice hand cases") {
  LabelMask a(4, 4), b(4, 4);
  for (std::size_t i : {0, 1, 2, 3, 4, 5}) a.labels[i] = kFetalHead;
  for (std::size_t i : {3, 4, 5, 6}) b.labels[i] = kFetalHead;
  CHECK(dsc(a, b, kFetalHead) == doctest::Approx(0.6));
  CHECK(dsc(a, a, kFetalHead) == 1.0);
  CHECK(dsc(a, b, kPubicSymphysis) == 1.0);  // both empty
  LabelMask c(4, 4);
  c.labels[15] = kFetalHead;
  CHECK(dsc(a, c, kFetalHead) == 0.0);
  b.labels[15] = kPubicSymphysis;
  a.labels[15] = kPubicSymphysis;
  // Pooled: 2 (3 + 1) / (6 + 4 + 1 + 1).
  CHECK(dsc_pooled(a, b) == doctest::Approx(8.0 / 12.0));
}

TEST_CASE("distance hand cases") {
  LabelMask a(8, 8), b(8, 8);
  a.at(0, 0) = kFetalHead;
  b.at(3, 4) = kFetalHead;
  CHECK(hausdorff(a, b, kFetalHead) == 5.0);
  CHECK(asd(a, b, kFetalHead) == 5.0);
  LabelMask c(8, 8);
  c.at(0, 2) = kFetalHead;
  CHECK(asd(a, c, kFetalHead) == 2.0);
  CHECK(hausdorff(a, a, kFetalHead) == 0.0);
  CHECK(asd(b, b, kFetalHead) == 0.0);
}

TEST_CASE("boundary extraction") {
  LabelMask one(5, 5);
  one.at(2, 3) = kPubicSymphysis;
  CHECK(boundary(one, kPubicSymphysis) == std::vector<Point>{{2, 3}});
  LabelMask square(8, 8);
  for (std::size_t y = 2; y < 6; ++y)
    for (std::size_t x = 2; x < 6; ++x) square.at(x, y) = kFetalHead;
  CHECK(boundary(square, kFetalHead).size() == 12);
  LabelMask full(4, 4, kFetalHead);
  CHECK(boundary(full, kFetalHead).size() == 12);  // the image border counts as outside
  CHECK(boundary(full, kPubicSymphysis).empty());

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = random_blobs(16, rng);
    for (std::uint8_t cls : {kPubicSymphysis, kFetalHead}) {
      const auto pts = boundary(m, cls);
      for (const auto& p : pts) CHECK(is_boundary(m, p.x, p.y, cls));
      CHECK(pts.size() == brute_boundary(m, cls).size());
    }
  }
}

TEST_CASE("metrics equal brute-force evaluation on random mask pairs") {
  std::mt19937_64 rng(2);
  int evaluated = 0;
  while (evaluated < 50) {
    const auto a = random_blobs(16, rng), b = random_blobs(16, rng);
    for (std::uint8_t cls : {kPubicSymphysis, kFetalHead}) {
      CHECK(dsc(a, b, cls) == brute_dsc(a, b, cls));
      if (a.count(cls) == 0 || b.count(cls) == 0) continue;
      const double hd = hausdorff(a, b, cls), sd = asd(a, b, cls);
      CHECK(std::abs(hd - brute_hd(a, b, cls)) < 1e-9);
      CHECK(std::abs(sd - brute_asd(a, b, cls)) < 1e-9);
      CHECK(hd >= sd);
      CHECK(hausdorff(b, a, cls) == hd);
      CHECK(std::abs(asd(b, a, cls) - sd) < 1e-12);
      CHECK(dsc(b, a, cls) == dsc(a, b, cls));
    }
    ++evaluated;
  }
}

TEST_CASE("distances scale linearly with spacing") {
  std::mt19937_64 rng(3);
  auto a = random_blobs(16, rng), b = random_blobs(16, rng);
  const double hd = hausdorff(a, b, kFetalHead), sd = asd(a, b, kFetalHead);
  a.spacing = b.spacing = 0.25;
  CHECK(hausdorff(a, b, kFetalHead) == doctest::Approx(0.25 * hd).epsilon(1e-12));
  CHECK(asd(a, b, kFetalHead) == doctest::Approx(0.25 * sd).epsilon(1e-12));
  b.spacing = 0.5;
  CHECK_THROWS_AS(hausdorff(a, b, kFetalHead), ParameterError);
}

TEST_CASE("undefined and invalid inputs") {
  LabelMask a(4, 4), b(4, 4);
  b.at(1, 1) = kFetalHead;
  CHECK_THROWS_AS(hausdorff(a, b, kFetalHead), UndefinedMetricError);
  CHECK_THROWS_AS(asd(b, a, kFetalHead), UndefinedMetricError);
  CHECK_THROWS(dsc(a, LabelMask(4, 5), kFetalHead));
  LabelMask bad(2, 2);
  bad.labels[0] = 7;
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("segmentation scores collect per-class values") {
  std::mt19937_64 rng(4);
  const auto a = random_blobs(16, rng), b = random_blobs(16, rng);
  const auto s = score_segmentation(a, b);
  CHECK(s.ps.dsc == dsc(a, b, kPubicSymphysis));
  CHECK(s.fh.hd == hausdorff(a, b, kFetalHead));
  CHECK(s.mean_dsc == doctest::Approx((s.ps.dsc + s.fh.dsc) / 2));
  CHECK(s.pooled_dsc == dsc_pooled(a, b));
  const auto same = score_segmentation(a, a);
  CHECK(same.mean_dsc == 1.0);
  CHECK(same.mean_hd == 0.0);
  CHECK(same.mean_asd == 0.0);
}
