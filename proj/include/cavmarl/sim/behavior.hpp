#pragma once

#include <array>
#include <limits>
#include <optional>
#include <span>
#include <string_view>

#include "cavmarl/sim/dynamics.hpp"
#include "cavmarl/sim/network.hpp"

namespace cavmarl::sim {

struct IdmParams {
  double v0 = 9.0;         // desired velocity (m/s)
  double t_headway = 1.14; // desired time headway T (s)
  double d0 = 3.67;        // jam distance (m)
  double a_max = 1.34;     // maximum acceleration (m/s^2)
  double b_comf = 2.06;    // comfortable deceleration (m/s^2)
  double delta_exp = 4.0;  // acceleration exponent

  double b_hard() const { return 2.0 * b_comf; }
  void validate() const;
};

struct MobilParams {
  double politeness = 0.3;
  double b_safe = 4.0;
  double a_thresh = 0.2;

  void validate() const;
};

enum class StyleName { Aggressive = 0, Normal = 1, Timid = 2 };
inline constexpr std::array<StyleName, 3> kAllStyles{StyleName::Aggressive, StyleName::Normal, StyleName::Timid};

std::string_view to_string(StyleName s);
std::optional<StyleName> parse_style(std::string_view s);

struct DrivingStyle {
  StyleName name = StyleName::Normal;
  IdmParams idm;
  MobilParams mobil;
};

/// Calibrated style table. v0 is left at its default; the environment draws it
/// per vehicle at spawn.
DrivingStyle style_params(StyleName name);

inline constexpr double kNoLeaderGap = std::numeric_limits<double>::infinity();

/// Intelligent Driver Model acceleration. `gap` is bumper-to-bumper distance
/// to the leader (+inf when free) and `approach_rate` is v - v_leader.
double idm_acceleration(double v, double gap, double approach_rate, const IdmParams& p);

/// Neighbour as seen from a lane: bumper-to-bumper gap to the ego vehicle and
/// the neighbour's speed and car-following parameters.
struct Neighbor {
  double gap = 0.0;
  double speed = 0.0;
  IdmParams idm;
};

struct LaneContext {
  std::optional<Neighbor> leader;
  std::optional<Neighbor> follower;
};

/// MOBIL lane-change decision (incentive + safety criteria). All
/// accelerations come from idm_acceleration; `vehicle_length` converts
/// bumper gaps when the ego leaves or enters a lane.
bool mobil_decide(double ego_speed, const LaneContext& current, const LaneContext& target, const MobilParams& p,
                  const IdmParams& ego_idm, double vehicle_length = 5.0);

/// A vehicle moving along a route, as needed for constant-speed prediction.
struct RoutedVehicle {
  VehicleState state;
  const Route* route = nullptr;
  double length = 5.0;
  double width = 2.0;
};

/// Constant-speed look-ahead collision check for a human driver. Returns the
/// emergency deceleration -b_hard when the ego footprint would intersect any
/// other footprint within `horizon` seconds, otherwise nothing.
std::optional<double> hv_safety_brake(const RoutedVehicle& ego, std::span<const RoutedVehicle> others,
                                      double horizon, double b_hard, double dt = 0.1);

}  // namespace cavmarl::sim
