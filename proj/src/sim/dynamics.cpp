#include "cavmarl/sim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cavmarl/sim/geometry.hpp"

namespace cavmarl::sim {

void ControlGains::validate() const {
  if (!(kp_lat > 0 && kp_psi > 0 && kp_v > 0 && wheelbase_l > 0)) {
    throw std::invalid_argument("ControlGains: all gains and the wheelbase must be positive");
  }
}

void ControlLimits::validate() const {
  if (!(a_min < 0 && a_max > 0 && steer_max > 0)) {
    throw std::invalid_argument("ControlLimits: need a_min < 0 < a_max and steer_max > 0");
  }
}

namespace {
double clipped_asin(double x) { return std::asin(std::clamp(x, -1.0, 1.0)); }
}  // namespace

double lateral_heading_control(const VehicleState& state, const LaneReference& lane,
                               const ControlGains& gains, const ControlLimits& limits) {
  const double v = std::max(state.v, kMinControlSpeed);
  const double v_lat_ref = -gains.kp_lat * lane.lateral_offset;
  const double heading_ref = lane.heading + clipped_asin(v_lat_ref / v);
  const double yaw_rate_ref = gains.kp_psi * normalize_angle(heading_ref - state.psi);
  const double steer = clipped_asin(0.5 * (gains.wheelbase_l / v) * yaw_rate_ref);
  return std::clamp(steer, -limits.steer_max, limits.steer_max);
}

double speed_control(const VehicleState& state, double target_speed, const ControlGains& gains,
                     const ControlLimits& limits) {
  return std::clamp(gains.kp_v * (target_speed - state.v), limits.a_min, limits.a_max);
}

VehicleState bicycle_step(const VehicleState& state, const ControlCommand& cmd, double dt, double wheelbase_l) {
  VehicleState next = state;
  const double v0 = std::max(state.v, 0.0);
  double travelled;
  if (cmd.accel < 0.0 && v0 + cmd.accel * dt < 0.0) {
    travelled = 0.5 * v0 * v0 / -cmd.accel;
    next.v = 0.0;
  } else {
    travelled = v0 * dt + 0.5 * cmd.accel * dt * dt;
    next.v = v0 + cmd.accel * dt;
  }
  const double beta = std::atan(0.5 * std::tan(cmd.steer));
  next.x = state.x + travelled * std::cos(state.psi + beta);
  next.y = state.y + travelled * std::sin(state.psi + beta);
  next.psi = normalize_angle(state.psi + travelled / wheelbase_l * std::sin(beta));
  return next;
}

}  // namespace cavmarl::sim
