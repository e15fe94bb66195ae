#include "cavmarl/sim/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cavmarl::sim {

std::string_view to_string(MetaAction a) {
  switch (a) {
    case MetaAction::Slower: return "SLOWER";
    case MetaAction::Idle: return "IDLE";
    case MetaAction::Faster: return "FASTER";
  }
  return "?";
}

std::string_view to_string(HvStyleMode m) {
  switch (m) {
    case HvStyleMode::None: return "none";
    case HvStyleMode::Homogeneous: return "homogeneous";
    case HvStyleMode::Heterogeneous: return "heterogeneous";
  }
  return "?";
}

std::string_view to_string(CavMovement m) {
  switch (m) {
    case CavMovement::Left: return "left";
    case CavMovement::Straight: return "straight";
    case CavMovement::Right: return "right";
    case CavMovement::Random: return "random";
  }
  return "?";
}

void RewardConfig::validate() const {
  if (!(v_min < v_max)) throw std::invalid_argument("RewardConfig: v_min must be below v_max");
}

void ScenarioConfig::validate() const {
  if (lanes_per_approach < 1 || lanes_per_approach > 3) {
    throw std::invalid_argument("lanes_per_approach must be 1, 2 or 3");
  }
  if (hv_count_min < 0 || hv_count_max < hv_count_min) throw std::invalid_argument("invalid HV count range");
  if (!(cav_spawn_min >= 0 && cav_spawn_max >= cav_spawn_min)) throw std::invalid_argument("invalid CAV spawn range");
  if (!(hv_spawn_min >= 0 && hv_spawn_max >= hv_spawn_min)) throw std::invalid_argument("invalid HV spawn range");
  if (!(hv_v0_min > 0 && hv_v0_max >= hv_v0_min)) throw std::invalid_argument("invalid HV v0 range");
  if (!(sim_dt > 0) || substeps < 1 || horizon < 1) throw std::invalid_argument("invalid time settings");
  if (obs_rows < 1) throw std::invalid_argument("obs_rows must be >= 1");
  if (!(perception_range > 0)) throw std::invalid_argument("perception_range must be positive");
  if (!(dv_cmd > 0 && v_cmd_max > 0 && hv_horizon > 0)) throw std::invalid_argument("invalid speed command settings");
  gains.validate();
  limits.validate();
  reward.validate();
}

const Vehicle* WorldState::find(int id) const {
  for (const Vehicle& v : vehicles) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

int Observation::present() const { return static_cast<int>(std::count(mask.begin(), mask.end(), 1)); }

IdmParams cav_follower_idm() { return style_params(StyleName::Normal).idm; }

IntersectionEnv::IntersectionEnv(ScenarioConfig cfg)
    : cfg_(std::move(cfg)), network_(std::make_shared<RoadNetwork>(cfg_.lanes_per_approach)) {
  cfg_.validate();
}

OrientedRect IntersectionEnv::footprint(const VehicleState& s) const {
  return {{s.x, s.y}, s.psi, cfg_.vehicle_length, cfg_.vehicle_width};
}

double IntersectionEnv::next_target_speed(double current, MetaAction a) const {
  double t = current;
  if (a == MetaAction::Slower) t -= cfg_.dv_cmd;
  if (a == MetaAction::Faster) t += cfg_.dv_cmd;
  return std::clamp(t, 0.0, cfg_.v_cmd_max);
}

// ---------------------------------------------------------------------------
// Spawning

namespace {

Movement pick_cav_movement(CavMovement m, Rng& rng) {
  switch (m) {
    case CavMovement::Left: return Movement::Left;
    case CavMovement::Straight: return Movement::Straight;
    case CavMovement::Right: return Movement::Right;
    case CavMovement::Random: return static_cast<Movement>(uniform_int(rng, 0, kNumMovements - 1));
  }
  return Movement::Left;
}

VehicleState state_on_route(const Route& r, double s, double v) {
  const Vec2 p = r.position_at(s);
  return {p.x, p.y, v, r.heading_at(s), r.id(), s};
}

}  // namespace

WorldState IntersectionEnv::spawn_seeded(std::uint64_t episode_seed) const {
  Rng rng(episode_seed);
  WorldState w = spawn(rng);
  w.seed = episode_seed;
  return w;
}

WorldState IntersectionEnv::spawn(Rng& rng) const {
  const RoadNetwork& net = *network_;
  const double approach = net.geometry().approach_length;
  WorldState w;
  w.done.assign(kNumAgents, false);

  for (int i = 0; i < kNumAgents; ++i) {
    const Movement mv = pick_cav_movement(cfg_.cav_movement, rng);
    const int lane = mv == Movement::Right ? net.lanes_per_approach() - 1 : 0;
    const Route& r = net.route(net.route_id(static_cast<Approach>(i), lane, mv));
    const double offset = uniform(rng, cfg_.cav_spawn_min, cfg_.cav_spawn_max);
    const double v = uniform(rng, cfg_.reward.v_min, cfg_.reward.v_max);
    Vehicle cav;
    cav.id = i;
    cav.agent = i;
    cav.kind = VehicleKind::Cav;
    cav.state = state_on_route(r, approach - offset, v);
    cav.target_speed = v;
    cav.style = style_params(StyleName::Normal);
    w.vehicles.push_back(cav);
  }

  int hv_target = 0;
  if (cfg_.hv_mode != HvStyleMode::None) hv_target = uniform_int(rng, cfg_.hv_count_min, cfg_.hv_count_max);

  int next_id = kNumAgents;
  for (int k = 0; k < hv_target; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg_.spawn_retries && !placed; ++attempt) {
      const auto entry = static_cast<Approach>(uniform_int(rng, 0, kNumApproaches - 1));
      const int lane = uniform_int(rng, 0, net.lanes_per_approach() - 1);
      const auto mv = static_cast<Movement>(uniform_int(rng, 0, kNumMovements - 1));
      const double offset = uniform(rng, cfg_.hv_spawn_min, cfg_.hv_spawn_max);
      const double s = approach - offset;
      bool clear = true;
      for (const Vehicle& o : w.vehicles) {
        const Route& orr = net.route(o.state.lane_id);
        if (orr.entry() == entry && orr.lane() == lane && std::abs(o.state.s - s) < cfg_.hv_min_spacing) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      StyleName style = cfg_.hv_style;
      if (cfg_.hv_mode == HvStyleMode::Heterogeneous) style = kAllStyles[uniform_index(rng, kAllStyles.size())];
      Vehicle hv;
      hv.id = next_id++;
      hv.kind = VehicleKind::Hv;
      hv.style = style_params(style);
      hv.style.idm.v0 = uniform(rng, cfg_.hv_v0_min, cfg_.hv_v0_max);
      const double v = uniform(rng, cfg_.reward.v_min, std::min(cfg_.reward.v_max, hv.style.idm.v0));
      hv.state = state_on_route(net.route(net.route_id(entry, lane, mv)), s, v);
      hv.target_speed = hv.style.idm.v0;
      w.vehicles.push_back(hv);
      placed = true;
    }
    if (!placed) {
      w.warnings.push_back("spawn: could not place HV " + std::to_string(k) + " after " +
                           std::to_string(cfg_.spawn_retries) + " attempts; HV count reduced");
    }
  }
  w.rng = rng;
  return w;
}

// ---------------------------------------------------------------------------
// Observation

Observation IntersectionEnv::observe(const WorldState& world, int agent) const {
  const int rows = cfg_.obs_rows;
  Observation obs;
  obs.rows = rows;
  obs.features.assign(static_cast<std::size_t>(rows * kNumFeatures), 0.0);
  obs.mask.assign(static_cast<std::size_t>(rows), 0);
  obs.vehicle_ids.assign(static_cast<std::size_t>(rows), -1);
  obs.distances.assign(static_cast<std::size_t>(rows), 0.0);

  const Vehicle& ego = world.cav(agent);
  const VehicleState& e = ego.state;
  const double c = std::cos(e.psi), s = std::sin(e.psi);
  const double evx = e.v * c, evy = e.v * s;
  obs.features[0] = e.x;
  obs.features[1] = e.y;
  obs.features[2] = evx;
  obs.features[3] = evy;
  obs.features[4] = c;
  obs.features[5] = s;
  obs.mask[0] = 1;
  obs.vehicle_ids[0] = ego.id;

  struct Candidate {
    double dist;
    int id;
    const Vehicle* v;
  };
  std::vector<Candidate> near;
  for (const Vehicle& o : world.vehicles) {
    if (o.id == ego.id || !o.on_road()) continue;
    const double d = std::hypot(o.state.x - e.x, o.state.y - e.y);
    if (d <= cfg_.perception_range) near.push_back({d, o.id, &o});
  }
  std::sort(near.begin(), near.end(), [](const Candidate& a, const Candidate& b) {
    return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
  });
  const std::size_t keep = std::min(near.size(), static_cast<std::size_t>(rows - 1));
  for (std::size_t k = 0; k < keep; ++k) {
    const VehicleState& o = near[k].v->state;
    const double dx = o.x - e.x, dy = o.y - e.y;
    const double dvx = o.v * std::cos(o.psi) - evx, dvy = o.v * std::sin(o.psi) - evy;
    double* row = &obs.features[(k + 1) * kNumFeatures];
    row[0] = c * dx + s * dy;
    row[1] = -s * dx + c * dy;
    row[2] = c * dvx + s * dvy;
    row[3] = -s * dvx + c * dvy;
    row[4] = std::cos(o.psi - e.psi);
    row[5] = std::sin(o.psi - e.psi);
    obs.mask[k + 1] = 1;
    obs.vehicle_ids[k + 1] = near[k].id;
    obs.distances[k + 1] = near[k].dist;
  }
  return obs;
}

std::vector<Observation> IntersectionEnv::observe_all(const WorldState& world) const {
  std::vector<Observation> out;
  out.reserve(kNumAgents);
  for (int i = 0; i < kNumAgents; ++i) out.push_back(observe(world, i));
  return out;
}

double IntersectionEnv::reward(const WorldState&, int, const AgentStepEvents& ev) const {
  const RewardConfig& r = cfg_.reward;
  const double rc = ev.collided ? r.collision_penalty : 0.0;
  const double re = r.c_e * std::clamp((ev.speed - r.v_min) / (r.v_max - r.v_min), 0.0, 1.0);
  const double ra = ev.arrived ? r.arrival_bonus : 0.0;
  return r.w_c * rc + r.w_e * re + r.w_a * ra;
}

// ---------------------------------------------------------------------------
// Collisions and neighbours

std::vector<std::pair<int, int>> IntersectionEnv::check_collision(const WorldState& world) const {
  std::vector<std::pair<int, int>> out;
  const auto& vs = world.vehicles;
  std::vector<OrientedRect> rects(vs.size());
  for (std::size_t i = 0; i < vs.size(); ++i) rects[i] = footprint(vs[i].state);
  const double reach = std::hypot(cfg_.vehicle_length, cfg_.vehicle_width);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (!vs[i].on_road()) continue;
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      if (!vs[j].on_road()) continue;
      if (std::abs(vs[i].state.x - vs[j].state.x) > reach || std::abs(vs[i].state.y - vs[j].state.y) > reach) continue;
      if (overlaps(rects[i], rects[j])) {
        out.emplace_back(std::min(vs[i].id, vs[j].id), std::max(vs[i].id, vs[j].id));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

LaneContext IntersectionEnv::lane_context(const WorldState& world, const Vehicle& self, int route_id) const {
  constexpr double kLookahead = 60.0;
  constexpr double kHeadingTolerance = 0.785398163397448;  // 45 deg
  const Route& r = network_->route(route_id);
  const double lane_half = network_->geometry().lane_width * 0.5;
  const double self_s = route_id == self.state.lane_id ? self.state.s : r.project({self.state.x, self.state.y}).s;

  LaneContext ctx;
  double best_ahead = kLookahead, best_behind = kLookahead;
  for (const Vehicle& o : world.vehicles) {
    if (o.id == self.id || !o.on_road()) continue;
    const RouteProjection pr = r.project({o.state.x, o.state.y});
    if (pr.distance >= lane_half) continue;
    if (std::abs(normalize_angle(o.state.psi - pr.heading)) > kHeadingTolerance) continue;
    const double ds = pr.s - self_s;
    const IdmParams idm = o.kind == VehicleKind::Hv ? o.style.idm : cav_follower_idm();
    if (ds >= 0.0 && ds < best_ahead) {
      best_ahead = ds;
      ctx.leader = Neighbor{ds - cfg_.vehicle_length, o.state.v, idm};
    } else if (ds < 0.0 && -ds < best_behind) {
      best_behind = -ds;
      ctx.follower = Neighbor{-ds - cfg_.vehicle_length, o.state.v, idm};
    }
  }
  return ctx;
}

double IntersectionEnv::hv_acceleration(const WorldState& world, const Vehicle& hv) const {
  const LaneContext ctx = lane_context(world, hv, hv.state.lane_id);
  double a = ctx.leader ? idm_acceleration(hv.state.v, ctx.leader->gap, hv.state.v - ctx.leader->speed, hv.style.idm)
                        : idm_acceleration(hv.state.v, kNoLeaderGap, 0.0, hv.style.idm);

  std::vector<RoutedVehicle> others;
  const double reach = hv.state.v * cfg_.hv_horizon + 40.0;
  for (const Vehicle& o : world.vehicles) {
    if (o.id == hv.id || !o.on_road()) continue;
    if (std::hypot(o.state.x - hv.state.x, o.state.y - hv.state.y) > reach) continue;
    RoutedVehicle rv{o.state, &network_->route(o.state.lane_id), cfg_.vehicle_length, cfg_.vehicle_width};
    if (o.collided) rv.state.v = 0.0;
    others.push_back(rv);
  }
  const RoutedVehicle me{hv.state, &network_->route(hv.state.lane_id), cfg_.vehicle_length, cfg_.vehicle_width};
  if (auto brake = hv_safety_brake(me, others, cfg_.hv_horizon, hv.style.idm.b_hard(), cfg_.sim_dt)) {
    a = std::min(a, *brake);
  }
  return a;
}

void IntersectionEnv::maybe_change_lane(const WorldState& world, Vehicle& hv) const {
  const RoadNetwork& net = *network_;
  if (net.lanes_per_approach() < 2) return;
  const Route& cur = net.route(hv.state.lane_id);
  // Lane changes only on the approach, well before the stop line.
  if (hv.state.s > cur.stop_line_s() - 10.0) return;
  const LaneContext here = lane_context(world, hv, cur.id());
  for (int dl : {-1, 1}) {
    const int lane = cur.lane() + dl;
    if (lane < 0 || lane >= net.lanes_per_approach()) continue;
    const int target = net.route_id(cur.entry(), lane, cur.movement());
    const LaneContext there = lane_context(world, hv, target);
    if (mobil_decide(hv.state.v, here, there, hv.style.mobil, hv.style.idm, cfg_.vehicle_length)) {
      hv.state.lane_id = target;
      hv.state.s = net.route(target).project({hv.state.x, hv.state.y}).s;
      return;
    }
  }
}

void IntersectionEnv::advance_vehicle(Vehicle& v, double accel) const {
  const Route& r = network_->route(v.state.lane_id);
  const RouteProjection pr = r.project({v.state.x, v.state.y});
  const LaneReference lane{pr.lateral_offset, pr.heading};
  const double steer = lateral_heading_control(v.state, lane, cfg_.gains, cfg_.limits);
  v.accel = accel;
  v.steer = steer;
  VehicleState next = bicycle_step(v.state, {accel, steer}, cfg_.sim_dt, cfg_.gains.wheelbase_l);
  next.s = r.project({next.x, next.y}).s;
  v.state = next;
}

// ---------------------------------------------------------------------------
// Step

StepResult IntersectionEnv::step(WorldState& world, std::span<const MetaAction> actions,
                                 const SubstepObserver& observer) const {
  if (actions.size() != static_cast<std::size_t>(kNumAgents)) {
    throw std::invalid_argument("step: expected one action per agent");
  }
  StepResult res;
  res.events.agents.assign(kNumAgents, {});
  const std::vector<bool> done_before = world.done;

  for (int i = 0; i < kNumAgents; ++i) {
    if (done_before[static_cast<std::size_t>(i)]) continue;
    Vehicle& cav = world.vehicles[static_cast<std::size_t>(i)];
    cav.target_speed = next_target_speed(cav.target_speed, actions[static_cast<std::size_t>(i)]);
  }

  for (Vehicle& v : world.vehicles) {
    if (v.kind == VehicleKind::Hv && v.active()) maybe_change_lane(world, v);
  }

  std::vector<double> accel(world.vehicles.size(), 0.0);
  for (int sub = 0; sub < cfg_.substeps; ++sub) {
    for (std::size_t k = 0; k < world.vehicles.size(); ++k) {
      const Vehicle& v = world.vehicles[k];
      if (!v.active()) continue;
      accel[k] = v.kind == VehicleKind::Cav ? speed_control(v.state, v.target_speed, cfg_.gains, cfg_.limits)
                                            : hv_acceleration(world, v);
    }
    for (std::size_t k = 0; k < world.vehicles.size(); ++k) {
      if (world.vehicles[k].active()) advance_vehicle(world.vehicles[k], accel[k]);
    }
    ++world.sim_step;

    for (const auto& [a, b] : check_collision(world)) {
      Vehicle& va = world.vehicles[static_cast<std::size_t>(a)];
      Vehicle& vb = world.vehicles[static_cast<std::size_t>(b)];
      if (va.collided && vb.collided) continue;
      res.events.collisions.emplace_back(a, b);
      for (Vehicle* v : {&va, &vb}) {
        if (v->collided) continue;
        if (v->agent >= 0 && !world.done[static_cast<std::size_t>(v->agent)]) {
          auto& ev = res.events.agents[static_cast<std::size_t>(v->agent)];
          ev.collided = true;
          ev.speed = v->state.v;
          world.done[static_cast<std::size_t>(v->agent)] = true;
        }
        v->collided = true;
        v->state.v = 0.0;
        v->accel = 0.0;
        v->steer = 0.0;
      }
    }

    for (Vehicle& v : world.vehicles) {
      if (!v.active()) continue;
      if (v.state.s >= network_->route(v.state.lane_id).length()) {
        v.arrived = true;
        res.events.arrivals.push_back(v.id);
        if (v.agent >= 0) {
          auto& ev = res.events.agents[static_cast<std::size_t>(v.agent)];
          ev.arrived = true;
          ev.speed = v.state.v;
          world.done[static_cast<std::size_t>(v.agent)] = true;
        }
      }
    }
    if (observer) observer(world);
  }
  ++world.time_step;

  res.rewards.assign(kNumAgents, 0.0);
  for (int i = 0; i < kNumAgents; ++i) {
    if (done_before[static_cast<std::size_t>(i)]) continue;
    auto& ev = res.events.agents[static_cast<std::size_t>(i)];
    if (!ev.collided && !ev.arrived) ev.speed = world.cav(i).state.v;
    res.rewards[static_cast<std::size_t>(i)] = reward(world, i, ev);
  }
  res.dones = world.done;
  res.observations = observe_all(world);
  const bool all_done = std::all_of(world.done.begin(), world.done.end(), [](bool d) { return d; });
  res.episode_done = all_done || world.time_step >= cfg_.horizon;
  return res;
}

}  // namespace cavmarl::sim
