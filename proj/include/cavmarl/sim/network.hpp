#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "cavmarl/sim/geometry.hpp"

namespace cavmarl::sim {

/// Approaches in counter-clockwise order; the CAV of agent i enters from approach i.
enum class Approach { South = 0, East = 1, North = 2, West = 3 };
enum class Movement { Left = 0, Straight = 1, Right = 2 };

inline constexpr int kNumApproaches = 4;
inline constexpr int kNumMovements = 3;

std::string_view to_string(Approach a);
std::string_view to_string(Movement m);

struct RouteProjection {
  double s = 0.0;               // arc length of the closest point
  double lateral_offset = 0.0;  // signed, positive to the left of travel
  double heading = 0.0;         // reference heading at s
  double distance = 0.0;        // |lateral_offset|, for convenience
};

/// A drivable path (approach lane, connector through the box, exit lane)
/// stored as an arc-length parameterized polyline.
class Route {
 public:
  Route(int id, Approach entry, int lane, Movement movement, std::vector<Vec2> points, double stop_line_s,
        double box_exit_s);

  int id() const { return id_; }
  Approach entry() const { return entry_; }
  int lane() const { return lane_; }
  Movement movement() const { return movement_; }
  double length() const { return cumulative_.back(); }
  double stop_line_s() const { return stop_line_s_; }
  double box_exit_s() const { return box_exit_s_; }
  const std::vector<Vec2>& points() const { return points_; }
  const std::vector<double>& arc_lengths() const { return cumulative_; }

  /// Position and tangent heading at arc length s (clamped to [0, length]).
  Vec2 position_at(double s) const;
  double heading_at(double s) const;

  /// Closest point on the polyline to p.
  RouteProjection project(Vec2 p) const;

 private:
  std::size_t segment_index(double s) const;

  int id_;
  Approach entry_;
  int lane_;
  Movement movement_;
  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
  std::vector<double> headings_;  // heading of segment i (points_[i] -> points_[i+1])
  double stop_line_s_;
  double box_exit_s_;
};

/// Spatial region where the swept footprints of two routes intersect.
struct ConflictZone {
  int id = -1;
  int route_a = -1;  // route_a < route_b
  int route_b = -1;
  ConvexPolygon polygon;
  Vec2 centroid;
};

struct NetworkGeometry {
  double lane_width = 4.0;
  double approach_length = 60.0;  // from the stop line
  double exit_length = 60.0;
  double corner_radius = 4.0;     // curb offset added to the box half-size
  double vehicle_width = 2.0;     // zone buffering
};

/// Four-approach cross with `lanes_per_approach` lanes each way. Lane 0 is the
/// innermost lane. Every entry lane carries left, straight and right routes
/// into the exit lane of the same index.
class RoadNetwork {
 public:
  RoadNetwork(int lanes_per_approach, NetworkGeometry geometry = {});

  int lanes_per_approach() const { return lanes_; }
  const NetworkGeometry& geometry() const { return geometry_; }
  /// Half-size of the square intersection box (stop lines sit at this offset).
  double box_half_size() const { return box_half_; }

  const std::vector<Route>& routes() const { return routes_; }
  const Route& route(int id) const { return routes_.at(static_cast<std::size_t>(id)); }
  int route_id(Approach entry, int lane, Movement movement) const;

  const std::vector<ConflictZone>& conflict_zones() const { return zones_; }
  /// Zone shared by two routes, symmetric in its arguments.
  const ConflictZone* zone(int route_a, int route_b) const;

 private:
  void build_routes();
  void build_zones();

  int lanes_;
  NetworkGeometry geometry_;
  double box_half_;
  std::vector<Route> routes_;
  std::vector<ConflictZone> zones_;
  std::vector<int> zone_lookup_;  // routes x routes -> zone index or -1
};

/// Builds the network, rejecting lane counts outside {1, 2, 3}.
RoadNetwork build_network(int lanes_per_approach);

}  // namespace cavmarl::sim
