#pragma once

#include <array>
#include <vector>

namespace cavmarl::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

double dot(Vec2 a, Vec2 b);
double cross(Vec2 a, Vec2 b);
double norm(Vec2 a);
double distance(Vec2 a, Vec2 b);

/// Wraps an angle into (-pi, pi].
double normalize_angle(double a);

/// Rectangle of given length (along heading) and width centered on a pose.
struct OrientedRect {
  Vec2 center;
  double heading = 0.0;
  double length = 5.0;
  double width = 2.0;

  std::array<Vec2, 4> corners() const;
};

struct ConvexPolygon {
  std::vector<Vec2> vertices;  // counter-clockwise
};

/// Separating-axis overlap test. Touching edges count as overlap.
bool overlaps(const OrientedRect& a, const OrientedRect& b);
bool overlaps(const OrientedRect& a, const ConvexPolygon& b);

/// Monotone-chain hull; collinear points dropped.
ConvexPolygon convex_hull(std::vector<Vec2> points);

}  // namespace cavmarl::sim
