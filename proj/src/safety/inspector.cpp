#include "cavmarl/safety/inspector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cavmarl::safety {

using sim::MetaAction;
using sim::Vehicle;
using sim::VehicleKind;

void InspectorConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("inspector: horizon must be at least 1");
  if (!(r_c > 0.0)) throw std::invalid_argument("inspector: r_c must be positive");
  if (!(hv_range >= 0.0)) throw std::invalid_argument("inspector: hv_range must be nonnegative");
}

std::string_view to_string(TrajectorySource s) {
  switch (s) {
    case TrajectorySource::CavRollout: return "cav_rollout";
    case TrajectorySource::CavCommitted: return "cav_committed";
    case TrajectorySource::HvIdm: return "hv_idm";
    case TrajectorySource::Static: return "static";
  }
  return "?";
}

Trajectory rollout_cav(const sim::IntersectionEnv& env, const sim::WorldState& world, int agent, MetaAction action,
                       int horizon) {
  const Vehicle& src = world.cav(agent);
  if (!src.active()) return stationary(src, horizon);
  const auto& cfg = env.config();
  Vehicle v = src;
  v.target_speed = env.next_target_speed(src.target_speed, action);
  Trajectory tr;
  tr.owner = v.id;
  tr.source = TrajectorySource::CavRollout;
  tr.max_speed = v.state.v;
  for (int t = 0; t < horizon; ++t) {
    for (int k = 0; k < cfg.substeps; ++k) {
      env.advance_vehicle(v, sim::speed_control(v.state, v.target_speed, cfg.gains, cfg.limits));
      tr.max_speed = std::max(tr.max_speed, v.state.v);
    }
    tr.points.push_back({v.state.x, v.state.y});
  }
  return tr;
}

Trajectory predict_hv(const sim::IntersectionEnv& env, const sim::WorldState& world, int vehicle_id, int horizon) {
  const Vehicle* src = world.find(vehicle_id);
  if (!src || src->kind != VehicleKind::Hv) {
    throw std::invalid_argument("predict_hv: vehicle " + std::to_string(vehicle_id) + " is not an HV");
  }
  if (!src->active()) return stationary(*src, horizon);
  const auto& cfg = env.config();
  const sim::LaneContext ctx = env.lane_context(world, *src, src->state.lane_id);
  Vehicle v = *src;
  Trajectory tr;
  tr.owner = v.id;
  tr.source = TrajectorySource::HvIdm;
  tr.max_speed = v.state.v;
  const double s0 = v.state.s;
  double elapsed = 0.0;
  for (int t = 0; t < horizon; ++t) {
    for (int k = 0; k < cfg.substeps; ++k) {
      double a;
      if (ctx.leader) {
        const double gap = ctx.leader->gap + ctx.leader->speed * elapsed - (v.state.s - s0);
        a = sim::idm_acceleration(v.state.v, gap, v.state.v - ctx.leader->speed, v.style.idm);
      } else {
        a = sim::idm_acceleration(v.state.v, sim::kNoLeaderGap, 0.0, v.style.idm);
      }
      env.advance_vehicle(v, a);
      elapsed += cfg.sim_dt;
      tr.max_speed = std::max(tr.max_speed, v.state.v);
    }
    tr.points.push_back({v.state.x, v.state.y});
  }
  return tr;
}

Trajectory stationary(const Vehicle& v, int horizon) {
  Trajectory tr;
  tr.owner = v.id;
  tr.source = TrajectorySource::Static;
  tr.points.assign(static_cast<std::size_t>(horizon), {v.state.x, v.state.y});
  tr.max_speed = 0.0;
  return tr;
}

namespace {

bool close(const sim::Vec2& a, const sim::Vec2& b, double r_c) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy <= r_c * r_c;
}

}  // namespace

ConflictReport conflict_index(std::span<const Trajectory> trajectories, double r_c) {
  ConflictReport rep;
  if (trajectories.empty()) return rep;
  const std::size_t T = trajectories.front().points.size();
  for (const Trajectory& tr : trajectories) {
    if (tr.points.size() != T) throw std::invalid_argument("conflict_index: trajectories differ in horizon");
  }
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    for (std::size_t j = i + 1; j < trajectories.size(); ++j) {
      const Trajectory& a = trajectories[i];
      const Trajectory& b = trajectories[j];
      for (std::size_t t = 0; t < T; ++t) {
        if (close(a.points[t], b.points[t], r_c)) {
          rep.pairs.emplace_back(std::min(a.owner, b.owner), std::max(a.owner, b.owner), static_cast<int>(t));
        }
      }
    }
  }
  rep.ci = static_cast<int>(rep.pairs.size());
  return rep;
}

int conflicts_of(int owner, const Trajectory& own, std::span<const Trajectory> others, double r_c) {
  int ci = 0;
  for (const Trajectory& o : others) {
    if (o.owner == owner) continue;
    if (o.points.size() != own.points.size()) throw std::invalid_argument("conflicts_of: horizon mismatch");
    for (std::size_t t = 0; t < own.points.size(); ++t) ci += close(own.points[t], o.points[t], r_c) ? 1 : 0;
  }
  return ci;
}

int sed(const sim::IntersectionEnv& env, const sim::WorldState& world, int agent, MetaAction a, MetaAction a_alt,
        std::span<const Trajectory> others, const InspectorConfig& cfg) {
  if (a == a_alt) return 0;
  const Trajectory ta = rollout_cav(env, world, agent, a, cfg.horizon);
  const Trajectory tb = rollout_cav(env, world, agent, a_alt, cfg.horizon);
  return conflicts_of(agent, ta, others, cfg.r_c) - conflicts_of(agent, tb, others, cfg.r_c);
}

std::vector<int> processing_order(const sim::WorldState& world, const prior::LevelRank& rank) {
  std::vector<int> order;
  for (int id : rank.order) {
    if (id >= 0 && id < sim::kNumAgents && !world.done[static_cast<std::size_t>(id)]) order.push_back(id);
  }
  for (int i = 0; i < sim::kNumAgents; ++i) {
    if (!world.done[static_cast<std::size_t>(i)] && std::find(order.begin(), order.end(), i) == order.end()) {
      order.push_back(i);
    }
  }
  return order;
}

CorrectionResult correct_actions(const sim::IntersectionEnv& env, const sim::WorldState& world,
                                 std::span<const MetaAction> proposed, const prior::LevelRank& rank,
                                 const InspectorConfig& cfg) {
  if (proposed.size() != static_cast<std::size_t>(sim::kNumAgents)) {
    throw std::invalid_argument("correct_actions: expected one action per agent");
  }
  CorrectionResult res;
  res.actions.assign(proposed.begin(), proposed.end());
  res.order = processing_order(world, rank);
  if (res.order.empty()) return res;

  // Slot per vehicle on the road; CAV slots are replaced as agents commit.
  std::vector<Trajectory> set;
  std::vector<int> cav_slot(sim::kNumAgents, -1);
  for (const Vehicle& v : world.vehicles) {
    if (!v.on_road()) continue;
    if (v.kind == VehicleKind::Cav) {
      if (world.done[static_cast<std::size_t>(v.agent)] || v.collided) {
        set.push_back(stationary(v, cfg.horizon));
      } else {
        cav_slot[static_cast<std::size_t>(v.agent)] = static_cast<int>(set.size());
        set.push_back(rollout_cav(env, world, v.agent, proposed[static_cast<std::size_t>(v.agent)], cfg.horizon));
      }
      continue;
    }
    bool near = false;
    for (int i : res.order) {
      const auto& c = world.cav(i).state;
      near = near || std::hypot(c.x - v.state.x, c.y - v.state.y) <= cfg.hv_range;
    }
    if (!near) continue;
    set.push_back(v.collided ? stationary(v, cfg.horizon) : predict_hv(env, world, v.id, cfg.horizon));
  }

  for (int i : res.order) {
    const auto slot = static_cast<std::size_t>(cav_slot[static_cast<std::size_t>(i)]);
    CorrectionRecord rec;
    rec.agent = i;
    rec.proposed = proposed[static_cast<std::size_t>(i)];
    rec.corrected = rec.proposed;
    rec.ci_before = conflicts_of(i, set[slot], set, cfg.r_c);
    rec.ci_after = rec.ci_before;
    if (rec.ci_before > 0) {
      rec.evaluated = true;
      std::array<Trajectory, sim::kNumActions> cand;
      std::array<int, sim::kNumActions> ci{};
      for (int k = 0; k < sim::kNumActions; ++k) {
        const auto a = static_cast<MetaAction>(k);
        cand[static_cast<std::size_t>(k)] = a == rec.proposed ? set[slot] : rollout_cav(env, world, i, a, cfg.horizon);
        ci[static_cast<std::size_t>(k)] = conflicts_of(i, cand[static_cast<std::size_t>(k)], set, cfg.r_c);
        rec.sed[static_cast<std::size_t>(k)] = rec.ci_before - ci[static_cast<std::size_t>(k)];
      }
      int best = static_cast<int>(rec.proposed);
      for (int k = 0; k < sim::kNumActions; ++k) {
        const auto bk = static_cast<std::size_t>(best), kk = static_cast<std::size_t>(k);
        if (rec.sed[kk] > rec.sed[bk]) {
          best = k;
        } else if (rec.sed[kk] == rec.sed[bk] && best != static_cast<int>(rec.proposed) &&
                   cand[kk].max_speed < cand[bk].max_speed) {
          best = k;
        }
      }
      rec.corrected = static_cast<MetaAction>(best);
      rec.ci_after = ci[static_cast<std::size_t>(best)];
      set[slot] = cand[static_cast<std::size_t>(best)];
    }
    set[slot].source = TrajectorySource::CavCommitted;
    res.actions[static_cast<std::size_t>(i)] = rec.corrected;
    res.records.push_back(rec);
  }
  return res;
}

}  // namespace cavmarl::safety
