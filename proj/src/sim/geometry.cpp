#include "cavmarl/sim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

namespace cavmarl::sim {

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }
double distance(Vec2 a, Vec2 b) { return norm(a - b); }

double normalize_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  double r = std::remainder(a, 2.0 * kPi);  // in [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

std::array<Vec2, 4> OrientedRect::corners() const {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  const Vec2 f{0.5 * length * c, 0.5 * length * s};
  const Vec2 l{-0.5 * width * s, 0.5 * width * c};
  return {center + f + l, center - f + l, center - f - l, center + f - l};
}

namespace {

bool separated_on_axis(Vec2 axis, std::span<const Vec2> a, std::span<const Vec2> b) {
  double amin = dot(axis, a[0]), amax = amin;
  for (const Vec2& p : a) {
    const double d = dot(axis, p);
    amin = std::min(amin, d);
    amax = std::max(amax, d);
  }
  double bmin = dot(axis, b[0]), bmax = bmin;
  for (const Vec2& p : b) {
    const double d = dot(axis, p);
    bmin = std::min(bmin, d);
    bmax = std::max(bmax, d);
  }
  return amax < bmin || bmax < amin;
}

bool polygons_overlap(std::span<const Vec2> a, std::span<const Vec2> b) {
  for (auto poly : {a, b}) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 e = poly[(i + 1) % n] - poly[i];
      if (separated_on_axis({-e.y, e.x}, a, b)) return false;
    }
  }
  return true;
}

}  // namespace

bool overlaps(const OrientedRect& a, const OrientedRect& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  return polygons_overlap(ca, cb);
}

bool overlaps(const OrientedRect& a, const ConvexPolygon& b) {
  if (b.vertices.size() < 3) return false;
  const auto ca = a.corners();
  return polygons_overlap(ca, b.vertices);
}

ConvexPolygon convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return {pts};
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    const Vec2& p = pts[i];
    while (k >= t && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return {hull};
}

}  // namespace cavmarl::sim
