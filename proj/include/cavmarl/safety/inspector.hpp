#pragma once

#include <array>
#include <span>
#include <string_view>
#include <tuple>
#include <vector>

#include "cavmarl/prior/game_prior.hpp"
#include "cavmarl/sim/env.hpp"

namespace cavmarl::safety {

struct InspectorConfig {
  int horizon = 5;       // predicted decision steps T
  double r_c = 4.0;      // centre-distance conflict radius (m)
  double hv_range = 50.0;  // HVs this close to an unfinished CAV are predicted

  void validate() const;
};

enum class TrajectorySource { CavRollout, CavCommitted, HvIdm, Static };
std::string_view to_string(TrajectorySource s);

struct Trajectory {
  int owner = -1;
  std::vector<sim::Vec2> points;  // positions after 1..T decision steps
  TrajectorySource source = TrajectorySource::Static;
  double max_speed = 0.0;
};

struct ConflictReport {
  int ci = 0;
  std::vector<std::tuple<int, int, int>> pairs;  // (id, id, step), first id lower
};

/// Holds the meta-action's target speed for T decision steps and advances a
/// private copy of the CAV along its route. Other vehicles are not moved.
Trajectory rollout_cav(const sim::IntersectionEnv& env, const sim::WorldState& world, int agent,
                       sim::MetaAction action, int horizon);

/// IDM prediction of an HV along its current route against its current
/// leader, which is propagated at constant speed.
Trajectory predict_hv(const sim::IntersectionEnv& env, const sim::WorldState& world, int vehicle_id, int horizon);

/// A vehicle that stays where it is, e.g. one frozen after a collision.
Trajectory stationary(const sim::Vehicle& v, int horizon);

/// Counts (pair, step) combinations whose predicted centres lie within r_c.
ConflictReport conflict_index(std::span<const Trajectory> trajectories, double r_c);

/// Conflicts involving `owner` only.
int conflicts_of(int owner, const Trajectory& own, std::span<const Trajectory> others, double r_c);

/// CI(a) - CI(a_alt) for one agent with every other trajectory held fixed.
int sed(const sim::IntersectionEnv& env, const sim::WorldState& world, int agent, sim::MetaAction a,
        sim::MetaAction a_alt, std::span<const Trajectory> others, const InspectorConfig& cfg);

struct CorrectionRecord {
  int agent = -1;
  sim::MetaAction proposed = sim::MetaAction::Idle;
  sim::MetaAction corrected = sim::MetaAction::Idle;
  std::array<int, sim::kNumActions> sed{};  // per candidate, zero when not evaluated
  int ci_before = 0;
  int ci_after = 0;
  bool evaluated = false;  // false when the proposal was conflict free
};

struct CorrectionResult {
  std::vector<sim::MetaAction> actions;
  std::vector<CorrectionRecord> records;  // in processing order
  std::vector<int> order;                 // agents in processing order
};

/// Processing order of unfinished CAVs: by rank, unranked agents last by id.
std::vector<int> processing_order(const sim::WorldState& world, const prior::LevelRank& rank);

/// Sequential priority-ordered correction of the proposed joint action.
CorrectionResult correct_actions(const sim::IntersectionEnv& env, const sim::WorldState& world,
                                 std::span<const sim::MetaAction> proposed, const prior::LevelRank& rank,
                                 const InspectorConfig& cfg);

}  // namespace cavmarl::safety
