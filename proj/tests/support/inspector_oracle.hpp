#pragma once

// Hand-placed scenes and an exhaustive re-implementation of the priority
// ordered action correction, used by the unit tests and the acceptance binary.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "cavmarl/safety/inspector.hpp"

namespace cavmarl::testing {

// Places a vehicle on a route at arc length s with speed v.
inline sim::Vehicle place(const sim::RoadNetwork& net, sim::VehicleKind kind, int id, int route, double s, double v) {
  const sim::Route& r = net.route(route);
  sim::Vehicle veh;
  veh.id = id;
  veh.kind = kind;
  veh.agent = kind == sim::VehicleKind::Cav ? id : -1;
  const sim::Vec2 p = r.position_at(s);
  veh.state.x = p.x;
  veh.state.y = p.y;
  veh.state.psi = r.heading_at(s);
  veh.state.v = v;
  veh.state.s = s;
  veh.state.lane_id = route;
  veh.target_speed = v;
  veh.style = sim::style_params(sim::StyleName::Normal);
  return veh;
}

// World whose CAV slots are all finished; callers activate the ones they need.
inline sim::WorldState empty_world(const sim::IntersectionEnv& env) {
  sim::WorldState w = env.spawn_seeded(1);
  w.vehicles.resize(sim::kNumAgents);
  for (int i = 0; i < sim::kNumAgents; ++i) {
    sim::Vehicle& v = w.vehicles[static_cast<std::size_t>(i)];
    v.arrived = true;
    v.collided = false;
    w.done[static_cast<std::size_t>(i)] = true;
  }
  return w;
}

inline void put_cav(sim::WorldState& w, const sim::IntersectionEnv& env, int agent, int route, double s, double v) {
  w.vehicles[static_cast<std::size_t>(agent)] = place(env.network(), sim::VehicleKind::Cav, agent, route, s, v);
  w.done[static_cast<std::size_t>(agent)] = false;
}

inline void put_hv(sim::WorldState& w, const sim::IntersectionEnv& env, int route, double s, double v) {
  const int id = static_cast<int>(w.vehicles.size());
  sim::Vehicle h = place(env.network(), sim::VehicleKind::Hv, id, route, s, v);
  h.style.idm.v0 = std::max(v, 1.0);
  w.vehicles.push_back(h);
}

// Arc length on `route` of the centroid of its conflict zone with `other`.
inline double zone_s(const sim::RoadNetwork& net, int route, int other) {
  const sim::ConflictZone* z = net.zone(route, other);
  return z ? net.route(route).project(z->centroid).s : -1.0;
}

inline int pair_conflicts(const safety::Trajectory& a, const safety::Trajectory& b, double r_c) {
  int n = 0;
  for (std::size_t t = 0; t < a.points.size(); ++t) {
    const double dx = a.points[t].x - b.points[t].x, dy = a.points[t].y - b.points[t].y;
    if (std::sqrt(dx * dx + dy * dy) <= r_c) ++n;
  }
  return n;
}

// Every candidate trajectory materialized up front.
struct MaterializedScene {
  std::vector<int> active;                                             // unfinished agents
  std::array<std::array<safety::Trajectory, sim::kNumActions>, sim::kNumAgents> cav{};
  std::vector<safety::Trajectory> fixed;                               // everything that is not an active CAV
};

inline MaterializedScene materialize(const sim::IntersectionEnv& env, const sim::WorldState& w,
                                     const safety::InspectorConfig& cfg) {
  MaterializedScene m;
  for (int i = 0; i < sim::kNumAgents; ++i) {
    const sim::Vehicle& v = w.cav(i);
    if (w.done[static_cast<std::size_t>(i)] || v.collided) {
      if (v.on_road()) m.fixed.push_back(safety::stationary(v, cfg.horizon));
      continue;
    }
    m.active.push_back(i);
    for (int k = 0; k < sim::kNumActions; ++k) {
      m.cav[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
          safety::rollout_cav(env, w, i, static_cast<sim::MetaAction>(k), cfg.horizon);
    }
  }
  for (std::size_t j = sim::kNumAgents; j < w.vehicles.size(); ++j) {
    const sim::Vehicle& h = w.vehicles[j];
    if (!h.on_road()) continue;
    bool near = false;
    for (int i : m.active) {
      near = near || std::hypot(w.cav(i).state.x - h.state.x, w.cav(i).state.y - h.state.y) <= cfg.hv_range;
    }
    if (!near) continue;
    m.fixed.push_back(h.collided ? safety::stationary(h, cfg.horizon) : safety::predict_hv(env, w, h.id, cfg.horizon));
  }
  return m;
}

// Conflicts of agent i taking action a while every other active agent takes
// joint[j].
inline int agent_ci(const MaterializedScene& m, int i, int a, const std::array<int, sim::kNumAgents>& joint,
                    double r_c) {
  const auto& own = m.cav[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
  int n = 0;
  for (int j : m.active) {
    if (j != i) n += pair_conflicts(own, m.cav[static_cast<std::size_t>(j)][static_cast<std::size_t>(joint[static_cast<std::size_t>(j)])], r_c);
  }
  for (const auto& f : m.fixed) n += pair_conflicts(own, f, r_c);
  return n;
}

inline int joint_ci(const MaterializedScene& m, const std::array<int, sim::kNumAgents>& joint, double r_c) {
  std::vector<const safety::Trajectory*> all;
  for (int i : m.active) all.push_back(&m.cav[static_cast<std::size_t>(i)][static_cast<std::size_t>(joint[static_cast<std::size_t>(i)])]);
  for (const auto& f : m.fixed) all.push_back(&f);
  int n = 0;
  for (std::size_t a = 0; a < all.size(); ++a)
    for (std::size_t b = a + 1; b < all.size(); ++b) n += pair_conflicts(*all[a], *all[b], r_c);
  return n;
}

struct OracleOutcome {
  std::array<int, sim::kNumAgents> actions{};
  std::array<int, sim::kNumAgents> ci_proposed{};   // per agent, at its turn
  std::array<int, sim::kNumAgents> ci_corrected{};
};

// Sequential argmax over the materialized candidates in `order`.
inline OracleOutcome oracle_correct(const MaterializedScene& m, const std::array<int, sim::kNumAgents>& proposed,
                                    const std::vector<int>& order, double r_c) {
  OracleOutcome out;
  out.actions = proposed;
  for (int i : order) {
    const auto ii = static_cast<std::size_t>(i);
    const int p = proposed[ii];
    std::array<int, sim::kNumActions> ci{};
    for (int k = 0; k < sim::kNumActions; ++k) ci[static_cast<std::size_t>(k)] = agent_ci(m, i, k, out.actions, r_c);
    int best = p;
    if (ci[static_cast<std::size_t>(p)] > 0) {
      for (int k = 0; k < sim::kNumActions; ++k) {
        const auto kk = static_cast<std::size_t>(k), bb = static_cast<std::size_t>(best);
        const bool better = ci[kk] < ci[bb];
        const bool tie_slower = ci[kk] == ci[bb] && best != p &&
                                m.cav[ii][kk].max_speed < m.cav[ii][bb].max_speed;
        if (better || tie_slower) best = k;
      }
    }
    out.ci_proposed[ii] = ci[static_cast<std::size_t>(p)];
    out.ci_corrected[ii] = ci[static_cast<std::size_t>(best)];
    out.actions[ii] = best;
  }
  return out;
}

// Random scene with 2-4 active CAVs and 0-3 HVs around the box.
inline sim::WorldState random_scene(const sim::IntersectionEnv& env, Rng& rng) {
  sim::WorldState w = empty_world(env);
  const auto& routes = env.network().routes();
  const int n_cav = uniform_int(rng, 2, sim::kNumAgents);
  for (int i = 0; i < n_cav; ++i) {
    const int r = uniform_int(rng, 0, static_cast<int>(routes.size()) - 1);
    const double s = uniform(rng, 30.0, std::min(90.0, routes[static_cast<std::size_t>(r)].length() - 1.0));
    put_cav(w, env, i, r, s, uniform(rng, 0.0, 9.0));
    auto& v = w.vehicles[static_cast<std::size_t>(i)];
    v.target_speed = std::clamp(v.state.v + uniform(rng, -1.5, 1.5), 0.0, 9.0);
  }
  const int n_hv = uniform_int(rng, 0, 3);
  for (int k = 0; k < n_hv; ++k) {
    const int r = uniform_int(rng, 0, static_cast<int>(routes.size()) - 1);
    put_hv(w, env, r, uniform(rng, 30.0, 80.0), uniform(rng, 2.0, 9.0));
  }
  return w;
}

inline prior::LevelRank random_rank(Rng& rng) {
  std::map<int, double> bat;
  for (int i = 0; i < sim::kNumAgents; ++i) bat[i] = uniform01(rng) < 0.2 ? 0.0 : uniform01(rng);
  return prior::rank_levels(bat);
}

struct SceneTally {
  int scenes = 0;
  int violations = 0;  // an agent's CI went up, in the library or the oracle
  int mismatches = 0;  // library action differs from the oracle's
  int evaluated = 0;   // agents the library actually re-evaluated
};

// One random scene with random proposals and rank, checked against the oracle.
inline void tally_random_scene(const sim::IntersectionEnv& env, const safety::InspectorConfig& cfg, Rng& rng,
                               SceneTally& t) {
  const sim::WorldState w = random_scene(env, rng);
  const prior::LevelRank rank = random_rank(rng);
  std::vector<sim::MetaAction> prop(sim::kNumAgents);
  std::array<int, sim::kNumAgents> p{};
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = uniform_int(rng, 0, sim::kNumActions - 1);
    prop[i] = static_cast<sim::MetaAction>(p[i]);
  }
  const safety::CorrectionResult r = safety::correct_actions(env, w, prop, rank, cfg);
  for (const auto& rec : r.records) {
    t.violations += rec.ci_after > rec.ci_before ? 1 : 0;
    t.evaluated += rec.evaluated ? 1 : 0;
  }
  const MaterializedScene m = materialize(env, w, cfg);
  const OracleOutcome o = oracle_correct(m, p, safety::processing_order(w, rank), cfg.r_c);
  for (int i : m.active) {
    const auto ii = static_cast<std::size_t>(i);
    t.violations += o.ci_corrected[ii] > o.ci_proposed[ii] ? 1 : 0;
    t.mismatches += static_cast<int>(r.actions[ii]) != o.actions[ii] ? 1 : 0;
  }
  ++t.scenes;
}

// Two CAVs approaching the shared zone of South and East routes, agent 0
// ranked above agent 1. Every listed scene has a conflict that sequential
// correction can remove.
struct CrossingScene {
  bool straight;  // straight routes, otherwise left turns
  double v;       // both speeds
  double d;       // agent 0 distance to the zone centroid
  double offset;  // agent 1 starts this much further back
  sim::MetaAction proposal;
};

inline std::vector<CrossingScene> hand_crossing_scenes() {
  using sim::MetaAction;
  return {{false, 4, 15, 3, MetaAction::Idle}, {false, 6, 10, 0, MetaAction::Slower},
          {false, 4, 10, 0, MetaAction::Slower}, {true, 4, 10, 3, MetaAction::Idle},
          {true, 6, 15, 0, MetaAction::Slower}, {true, 8, 20, 0, MetaAction::Slower}};
}

struct CrossingOutcome {
  std::array<int, sim::kNumAgents> library{};
  std::array<int, sim::kNumAgents> oracle{};
  int joint_before = 0;
  int joint_after = 0;
  bool matches() const { return library == oracle; }
  bool improves() const { return joint_after < joint_before; }
};

inline CrossingOutcome run_crossing_scene(const sim::IntersectionEnv& env, const safety::InspectorConfig& cfg,
                                          const CrossingScene& s) {
  const sim::RoadNetwork& net = env.network();
  const auto mv = s.straight ? sim::Movement::Straight : sim::Movement::Left;
  const int ra = net.route_id(sim::Approach::South, 0, mv), rb = net.route_id(sim::Approach::East, 0, mv);
  sim::WorldState w = empty_world(env);
  put_cav(w, env, 0, ra, zone_s(net, ra, rb) - s.d, s.v);
  put_cav(w, env, 1, rb, zone_s(net, rb, ra) - s.d - s.offset, s.v);
  std::vector<sim::MetaAction> prop(sim::kNumAgents, sim::MetaAction::Idle);
  prop[0] = prop[1] = s.proposal;
  const prior::LevelRank rank = prior::rank_levels({{0, 0.6}, {1, 0.4}});
  const safety::CorrectionResult r = safety::correct_actions(env, w, prop, rank, cfg);

  const MaterializedScene m = materialize(env, w, cfg);
  std::array<int, sim::kNumAgents> p{1, 1, 1, 1};
  p[0] = p[1] = static_cast<int>(s.proposal);
  CrossingOutcome out;
  out.oracle = oracle_correct(m, p, {0, 1}, cfg.r_c).actions;
  for (std::size_t i = 0; i < out.library.size(); ++i) out.library[i] = static_cast<int>(r.actions[i]);
  out.joint_before = joint_ci(m, p, cfg.r_c);
  out.joint_after = joint_ci(m, out.library, cfg.r_c);
  return out;
}

}  // namespace cavmarl::testing
