#include "cavmarl/sim/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cavmarl::sim {

void IdmParams::validate() const {
  if (!(v0 > 0 && t_headway > 0 && d0 > 0 && a_max > 0 && b_comf > 0 && delta_exp > 0)) {
    throw std::invalid_argument("IdmParams: all fields must be positive");
  }
}

void MobilParams::validate() const {
  if (!(b_safe > 0 && a_thresh >= 0 && politeness >= 0 && politeness <= 1)) {
    throw std::invalid_argument("MobilParams: need b_safe > 0, a_thresh >= 0, politeness in [0, 1]");
  }
}

std::string_view to_string(StyleName s) {
  switch (s) {
    case StyleName::Aggressive: return "aggressive";
    case StyleName::Normal: return "normal";
    case StyleName::Timid: return "timid";
  }
  return "?";
}

std::optional<StyleName> parse_style(std::string_view s) {
  for (StyleName n : kAllStyles) {
    if (to_string(n) == s) return n;
  }
  return std::nullopt;
}

DrivingStyle style_params(StyleName name) {
  DrivingStyle st;
  st.name = name;
  switch (name) {
    case StyleName::Aggressive:
      st.idm = {.v0 = 9.0, .t_headway = 0.86, .d0 = 3.38, .a_max = 1.35, .b_comf = 2.07, .delta_exp = 4.0};
      st.mobil = {.politeness = 0.0, .b_safe = 4.0, .a_thresh = 0.2};
      break;
    case StyleName::Normal:
      st.idm = {.v0 = 9.0, .t_headway = 1.14, .d0 = 3.67, .a_max = 1.34, .b_comf = 2.06, .delta_exp = 4.0};
      st.mobil = {.politeness = 0.3, .b_safe = 4.0, .a_thresh = 0.2};
      break;
    case StyleName::Timid:
      st.idm = {.v0 = 9.0, .t_headway = 1.27, .d0 = 3.69, .a_max = 1.36, .b_comf = 1.99, .delta_exp = 4.0};
      st.mobil = {.politeness = 0.5, .b_safe = 4.0, .a_thresh = 0.2};
      break;
  }
  return st;
}

double idm_acceleration(double v, double gap, double approach_rate, const IdmParams& p) {
  const double b_hard = p.b_hard();
  if (gap <= 0.0) return -b_hard;
  double free_term = 1.0 - std::pow(v / p.v0, p.delta_exp);
  double interaction = 0.0;
  if (std::isfinite(gap)) {
    const double desired = p.d0 + p.t_headway * v + v * approach_rate / (2.0 * std::sqrt(p.a_max * p.b_comf));
    const double ratio = std::max(desired, p.d0) / gap;
    interaction = ratio * ratio;
  }
  return std::clamp(p.a_max * (free_term - interaction), -b_hard, p.a_max);
}

namespace {

double accel_behind(double v, const std::optional<Neighbor>& leader, const IdmParams& p) {
  if (!leader) return idm_acceleration(v, kNoLeaderGap, 0.0, p);
  return idm_acceleration(v, leader->gap, v - leader->speed, p);
}

}  // namespace

bool mobil_decide(double ego_speed, const LaneContext& current, const LaneContext& target, const MobilParams& p,
                  const IdmParams& ego_idm, double vehicle_length) {
  // Ego before and after the change.
  const double a_ego = accel_behind(ego_speed, current.leader, ego_idm);
  const double a_ego_new = accel_behind(ego_speed, target.leader, ego_idm);

  // New follower: currently behind the target-lane leader, afterwards behind ego.
  double gain_new_follower = 0.0;
  if (target.follower) {
    const Neighbor& f = *target.follower;
    const double a_after = idm_acceleration(f.speed, f.gap, f.speed - ego_speed, f.idm);
    if (a_after < -p.b_safe) return false;
    std::optional<Neighbor> their_leader;
    if (target.leader) {
      their_leader = Neighbor{f.gap + vehicle_length + target.leader->gap, target.leader->speed, target.leader->idm};
    }
    gain_new_follower = a_after - accel_behind(f.speed, their_leader, f.idm);
  }

  // Old follower: currently behind ego, afterwards behind ego's old leader.
  double gain_old_follower = 0.0;
  if (current.follower) {
    const Neighbor& f = *current.follower;
    const double a_before = idm_acceleration(f.speed, f.gap, f.speed - ego_speed, f.idm);
    std::optional<Neighbor> their_leader;
    if (current.leader) {
      their_leader = Neighbor{f.gap + vehicle_length + current.leader->gap, current.leader->speed, current.leader->idm};
    }
    gain_old_follower = accel_behind(f.speed, their_leader, f.idm) - a_before;
  }

  const double incentive = (a_ego_new - a_ego) + p.politeness * (gain_new_follower + gain_old_follower);
  return incentive > p.a_thresh;
}

namespace {

OrientedRect predicted_footprint(const RoutedVehicle& rv, double t) {
  const double s = rv.state.s + rv.state.v * t;
  return {rv.route->position_at(s), rv.route->heading_at(s), rv.length, rv.width};
}

}  // namespace

std::optional<double> hv_safety_brake(const RoutedVehicle& ego, std::span<const RoutedVehicle> others,
                                      double horizon, double b_hard, double dt) {
  if (!(horizon > 0.0)) throw std::invalid_argument("hv_safety_brake: horizon must be positive");
  if (others.empty() || ego.route == nullptr) return std::nullopt;
  const int steps = static_cast<int>(std::ceil(horizon / dt - 1e-9));
  for (int k = 1; k <= steps; ++k) {
    const double t = std::min(horizon, k * dt);
    const OrientedRect mine = predicted_footprint(ego, t);
    for (const RoutedVehicle& o : others) {
      if (o.route == nullptr) continue;
      if (overlaps(mine, predicted_footprint(o, t))) return -b_hard;
    }
  }
  return std::nullopt;
}

}  // namespace cavmarl::sim
