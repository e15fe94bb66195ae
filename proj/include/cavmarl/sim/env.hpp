#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cavmarl/sim/behavior.hpp"
#include "cavmarl/sim/dynamics.hpp"
#include "cavmarl/sim/network.hpp"
#include "cavmarl/sim/rng.hpp"

namespace cavmarl::sim {

enum class MetaAction { Slower = 0, Idle = 1, Faster = 2 };
inline constexpr int kNumActions = 3;
inline constexpr int kNumAgents = 4;
inline constexpr int kNumFeatures = 6;

std::string_view to_string(MetaAction a);

enum class VehicleKind { Cav, Hv };
enum class HvStyleMode { None, Homogeneous, Heterogeneous };
enum class CavMovement { Left, Straight, Right, Random };

std::string_view to_string(HvStyleMode m);
std::string_view to_string(CavMovement m);

struct RewardConfig {
  double w_c = 1.0;
  double w_e = 1.0;
  double w_a = 1.0;
  double c_e = 1.0;
  double v_min = 3.0;
  double v_max = 9.0;
  double collision_penalty = -10.0;
  double arrival_bonus = 5.0;

  void validate() const;
};

struct ScenarioConfig {
  int lanes_per_approach = 1;
  int hv_count_min = 0;
  int hv_count_max = 0;
  HvStyleMode hv_mode = HvStyleMode::None;
  StyleName hv_style = StyleName::Normal;  // used by the homogeneous mode
  CavMovement cav_movement = CavMovement::Left;

  double cav_spawn_min = 20.0;  // distance before the stop line (m)
  double cav_spawn_max = 50.0;
  double hv_spawn_min = 5.0;
  double hv_spawn_max = 60.0;
  double hv_min_spacing = 10.0;  // centre distance between vehicles in one entry lane
  double hv_v0_min = 7.0;
  double hv_v0_max = 10.0;
  int spawn_retries = 50;

  double sim_dt = 0.1;
  int substeps = 10;  // simulation steps per decision step
  int horizon = 100;  // decision steps per episode

  int obs_rows = 8;
  double perception_range = 50.0;

  double dv_cmd = 1.5;
  double v_cmd_max = 9.0;
  double hv_horizon = 3.0;

  double vehicle_length = 5.0;
  double vehicle_width = 2.0;

  ControlGains gains;
  ControlLimits limits;
  RewardConfig reward;

  double decision_dt() const { return sim_dt * substeps; }
  void validate() const;
};

struct Vehicle {
  int id = -1;
  VehicleKind kind = VehicleKind::Cav;
  int agent = -1;  // CAV index, -1 for HVs
  VehicleState state;
  double target_speed = 0.0;  // CAV speed command
  DrivingStyle style;         // HV behaviour (unused for CAVs)
  double accel = 0.0;         // last commanded acceleration
  double steer = 0.0;
  bool collided = false;  // frozen in place
  bool arrived = false;   // left the network

  bool on_road() const { return !arrived; }
  bool active() const { return !arrived && !collided; }
};

struct WorldState {
  std::uint64_t seed = 0;
  int time_step = 0;  // decision steps taken
  int sim_step = 0;
  std::vector<Vehicle> vehicles;  // CAVs first, index == agent == id
  std::vector<bool> done;         // per agent
  Rng rng;
  std::vector<std::string> warnings;

  const Vehicle& cav(int agent) const { return vehicles.at(static_cast<std::size_t>(agent)); }
  const Vehicle* find(int id) const;
  int hv_count() const { return static_cast<int>(vehicles.size()) - kNumAgents; }
};

/// Padded per-agent feature matrix. Row 0 is the ego vehicle in absolute
/// coordinates; the other rows are the nearest vehicles in range expressed in
/// the ego frame (translated and rotated by the ego heading).
struct Observation {
  int rows = 0;
  std::vector<double> features;     // rows x kNumFeatures
  std::vector<std::uint8_t> mask;   // 1 = present
  std::vector<int> vehicle_ids;     // -1 where masked
  std::vector<double> distances;    // ego distance, 0 where masked

  double at(int row, int col) const { return features[static_cast<std::size_t>(row * kNumFeatures + col)]; }
  int present() const;
};

struct AgentStepEvents {
  bool collided = false;
  bool arrived = false;
  double speed = 0.0;  // speed used for the efficiency term
};

struct StepEvents {
  std::vector<std::pair<int, int>> collisions;  // vehicle id pairs, first < second
  std::vector<int> arrivals;                    // vehicle ids that left the network
  std::vector<AgentStepEvents> agents;          // per agent
};

struct StepResult {
  std::vector<Observation> observations;
  std::vector<double> rewards;
  std::vector<bool> dones;
  StepEvents events;
  bool episode_done = false;
};

/// Called after each simulation sub-step with the updated world.
using SubstepObserver = std::function<void(const WorldState&)>;

class IntersectionEnv {
 public:
  explicit IntersectionEnv(ScenarioConfig cfg);

  const ScenarioConfig& config() const { return cfg_; }
  const RoadNetwork& network() const { return *network_; }

  /// Randomized episode start, deterministic in the generator state.
  WorldState spawn(Rng& rng) const;
  WorldState spawn_seeded(std::uint64_t episode_seed) const;

  Observation observe(const WorldState& world, int agent) const;
  std::vector<Observation> observe_all(const WorldState& world) const;

  double reward(const WorldState& world, int agent, const AgentStepEvents& events) const;

  /// Advances one decision step. Actions for finished agents are ignored.
  StepResult step(WorldState& world, std::span<const MetaAction> actions,
                  const SubstepObserver& observer = {}) const;

  /// All overlapping footprint pairs among vehicles on the road.
  std::vector<std::pair<int, int>> check_collision(const WorldState& world) const;

  OrientedRect footprint(const VehicleState& s) const;
  double next_target_speed(double current, MetaAction a) const;

  /// Leader / follower of `self` along route `route_id`, found geometrically.
  LaneContext lane_context(const WorldState& world, const Vehicle& self, int route_id) const;

  /// Acceleration of an HV before the lateral decision: IDM with the
  /// look-ahead brake override.
  double hv_acceleration(const WorldState& world, const Vehicle& hv) const;

  /// One simulation sub-step of a single vehicle: route-tracking steering,
  /// the given acceleration, bicycle integration and route re-projection.
  void advance_vehicle(Vehicle& v, double accel) const;

 private:
  void maybe_change_lane(const WorldState& world, Vehicle& hv) const;

  ScenarioConfig cfg_;
  std::shared_ptr<const RoadNetwork> network_;
};

IdmParams cav_follower_idm();

}  // namespace cavmarl::sim
