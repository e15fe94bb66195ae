#pragma once

#include <numbers>

namespace cavmarl::sim {

/// Kinematic state of one vehicle. `lane_id` is the id of the route the
/// vehicle tracks and `s` its arc-length progress along that route.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double psi = 0.0;
  int lane_id = -1;
  double s = 0.0;
};

struct ControlGains {
  double kp_lat = 1.0;
  double kp_psi = 2.0;
  double kp_v = 1.0;
  double wheelbase_l = 2.5;

  void validate() const;
};

struct ControlLimits {
  double a_min = -5.0;
  double a_max = 3.0;
  double steer_max = std::numbers::pi / 4.0;

  void validate() const;
};

struct ControlCommand {
  double accel = 0.0;
  double steer = 0.0;
};

/// Lane geometry at the vehicle's projection onto its reference line.
struct LaneReference {
  double lateral_offset = 0.0;  // positive = left of the center line
  double heading = 0.0;
};

inline constexpr double kMinControlSpeed = 0.1;

/// Cascaded lateral-position / heading controller producing a front-wheel
/// angle, clipped to the steering limit.
double lateral_heading_control(const VehicleState& state, const LaneReference& lane,
                               const ControlGains& gains, const ControlLimits& limits);

/// Proportional speed tracking, clamped to the acceleration limits.
double speed_control(const VehicleState& state, double target_speed, const ControlGains& gains,
                     const ControlLimits& limits);

/// One step of the kinematic bicycle model. Longitudinal motion under a
/// piecewise-constant acceleration is integrated exactly (stopping at v = 0);
/// heading is advanced by explicit Euler using the distance travelled.
VehicleState bicycle_step(const VehicleState& state, const ControlCommand& cmd, double dt, double wheelbase_l);

}  // namespace cavmarl::sim
