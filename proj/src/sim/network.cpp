#include "cavmarl/sim/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cavmarl::sim {

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::South: return "south";
    case Approach::East: return "east";
    case Approach::North: return "north";
    case Approach::West: return "west";
  }
  return "?";
}

std::string_view to_string(Movement m) {
  switch (m) {
    case Movement::Left: return "left";
    case Movement::Straight: return "straight";
    case Movement::Right: return "right";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Route

Route::Route(int id, Approach entry, int lane, Movement movement, std::vector<Vec2> points, double stop_line_s,
             double box_exit_s)
    : id_(id),
      entry_(entry),
      lane_(lane),
      movement_(movement),
      points_(std::move(points)),
      stop_line_s_(stop_line_s),
      box_exit_s_(box_exit_s) {
  if (points_.size() < 2) throw std::invalid_argument("Route: need at least two points");
  cumulative_.assign(points_.size(), 0.0);
  headings_.resize(points_.size() - 1);
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    const Vec2 d = points_[i + 1] - points_[i];
    const double len = norm(d);
    if (!(len > 0.0)) throw std::invalid_argument("Route: repeated point");
    cumulative_[i + 1] = cumulative_[i] + len;
    headings_[i] = std::atan2(d.y, d.x);
  }
}

std::size_t Route::segment_index(double s) const {
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t idx = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  return std::min(idx, headings_.size() - 1);
}

Vec2 Route::position_at(double s) const {
  s = std::clamp(s, 0.0, length());
  const std::size_t i = segment_index(s);
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double t = (s - cumulative_[i]) / seg;
  return points_[i] + t * (points_[i + 1] - points_[i]);
}

double Route::heading_at(double s) const { return headings_[segment_index(std::clamp(s, 0.0, length()))]; }

RouteProjection Route::project(Vec2 p) const {
  RouteProjection best;
  double best_d2 = std::numeric_limits<double>::infinity();
  const std::size_t n = headings_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = points_[i];
    const Vec2 d = points_[i + 1] - a;
    const double len2 = dot(d, d);
    double t = dot(p - a, d) / len2;
    // The first and last segments extend beyond the route ends.
    const double lo = (i == 0) ? -std::numeric_limits<double>::infinity() : 0.0;
    const double hi = (i + 1 == n) ? std::numeric_limits<double>::infinity() : 1.0;
    t = std::clamp(t, lo, hi);
    const Vec2 q = a + t * d;
    const Vec2 r = p - q;
    const double d2 = dot(r, r);
    if (d2 < best_d2) {
      best_d2 = d2;
      const double len = std::sqrt(len2);
      best.s = cumulative_[i] + t * len;
      best.lateral_offset = cross(d, r) / len;
      best.heading = headings_[i];
      best.distance = std::sqrt(d2);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// RoadNetwork

namespace {

constexpr double kArcSpacing = 0.25;
constexpr double kZoneSampleSpacing = 0.25;
constexpr double kZoneMargin = 5.0;  // clip zones to the box grown by a vehicle length

Vec2 rotate(Vec2 p, int quarter_turns) {
  Vec2 r = p;
  for (int i = 0; i < quarter_turns; ++i) r = {-r.y, r.x};
  return r;
}

void append_arc(std::vector<Vec2>& pts, Vec2 center, double radius, double from, double to) {
  const double sweep = to - from;
  const int n = std::max(2, static_cast<int>(std::ceil(std::abs(sweep) * radius / kArcSpacing)));
  for (int k = 1; k <= n; ++k) {
    const double a = from + sweep * k / n;
    pts.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
}

}  // namespace

RoadNetwork::RoadNetwork(int lanes_per_approach, NetworkGeometry geometry)
    : lanes_(lanes_per_approach), geometry_(geometry) {
  if (lanes_ < 1 || lanes_ > 3) {
    throw std::invalid_argument("lanes_per_approach must be 1, 2 or 3 (got " + std::to_string(lanes_) + ")");
  }
  box_half_ = lanes_ * geometry_.lane_width + geometry_.corner_radius;
  build_routes();
  build_zones();
}

RoadNetwork build_network(int lanes_per_approach) { return RoadNetwork(lanes_per_approach); }

int RoadNetwork::route_id(Approach entry, int lane, Movement movement) const {
  if (lane < 0 || lane >= lanes_) throw std::out_of_range("route_id: lane out of range");
  return (static_cast<int>(entry) * lanes_ + lane) * kNumMovements + static_cast<int>(movement);
}

void RoadNetwork::build_routes() {
  constexpr double kPi = std::numbers::pi;
  const double h = box_half_;
  const double w = geometry_.lane_width;
  for (int a = 0; a < kNumApproaches; ++a) {
    for (int lane = 0; lane < lanes_; ++lane) {
      for (int m = 0; m < kNumMovements; ++m) {
        // Canonical frame: entering from the south, travelling north.
        const double xk = (lane + 0.5) * w;
        std::vector<Vec2> pts{{xk, -h - geometry_.approach_length}, {xk, -h}};
        const double stop_s = geometry_.approach_length;
        double connector = 0.0;
        switch (static_cast<Movement>(m)) {
          case Movement::Straight:
            pts.push_back({xk, h});
            pts.push_back({xk, h + geometry_.exit_length});
            connector = 2.0 * h;
            break;
          case Movement::Left: {
            const double r = h + xk;
            append_arc(pts, {-h, -h}, r, 0.0, kPi / 2.0);
            pts.push_back({-h - geometry_.exit_length, -h + r});
            connector = r * kPi / 2.0;
            break;
          }
          case Movement::Right: {
            const double r = h - xk;
            append_arc(pts, {h, -h}, r, kPi, kPi / 2.0);
            pts.push_back({h + geometry_.exit_length, -h + r});
            connector = r * kPi / 2.0;
            break;
          }
        }
        for (Vec2& p : pts) p = rotate(p, a);
        const int id = static_cast<int>(routes_.size());
        routes_.emplace_back(id, static_cast<Approach>(a), lane, static_cast<Movement>(m), std::move(pts), stop_s,
                             stop_s + connector);
      }
    }
  }
}

void RoadNetwork::build_zones() {
  const std::size_t n = routes_.size();
  zone_lookup_.assign(n * n, -1);
  const double limit = box_half_ + kZoneMargin;
  const double reach = geometry_.vehicle_width;  // two half-width buffers touching
  auto inside = [limit](Vec2 p) { return std::abs(p.x) <= limit && std::abs(p.y) <= limit; };

  auto collect = [&](const Route& from, const Route& other, std::vector<Vec2>& out) {
    bool any = false;
    for (double s = 0.0; s <= from.length(); s += kZoneSampleSpacing) {
      const Vec2 p = from.position_at(s);
      if (!inside(p)) continue;
      const RouteProjection pr = other.project(p);
      if (pr.distance >= reach || pr.s < 0.0 || pr.s > other.length()) continue;
      if (!inside(other.position_at(pr.s))) continue;
      const double hd = from.heading_at(s);
      const Vec2 side{-std::sin(hd) * 0.5 * geometry_.vehicle_width, std::cos(hd) * 0.5 * geometry_.vehicle_width};
      out.push_back(p + side);
      out.push_back(p - side);
      any = true;
    }
    return any;
  };

  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const Route& ra = routes_[a];
      const Route& rb = routes_[b];
      // Routes sharing an entry lane interact by car following, not crossing.
      if (ra.entry() == rb.entry() && ra.lane() == rb.lane()) continue;
      std::vector<Vec2> pts;
      const bool hit_a = collect(ra, rb, pts);
      const bool hit_b = collect(rb, ra, pts);
      if (!hit_a && !hit_b) continue;
      ConflictZone z;
      z.id = static_cast<int>(zones_.size());
      z.route_a = static_cast<int>(a);
      z.route_b = static_cast<int>(b);
      z.polygon = convex_hull(std::move(pts));
      if (z.polygon.vertices.size() < 3) continue;
      Vec2 c;
      for (const Vec2& v : z.polygon.vertices) c = c + v;
      z.centroid = (1.0 / static_cast<double>(z.polygon.vertices.size())) * c;
      zone_lookup_[a * n + b] = zone_lookup_[b * n + a] = z.id;
      zones_.push_back(std::move(z));
    }
  }
}

const ConflictZone* RoadNetwork::zone(int route_a, int route_b) const {
  const std::size_t n = routes_.size();
  if (route_a < 0 || route_b < 0 || static_cast<std::size_t>(route_a) >= n || static_cast<std::size_t>(route_b) >= n) {
    return nullptr;
  }
  const int idx = zone_lookup_[static_cast<std::size_t>(route_a) * n + static_cast<std::size_t>(route_b)];
  return idx < 0 ? nullptr : &zones_[static_cast<std::size_t>(idx)];
}

}  // namespace cavmarl::sim
