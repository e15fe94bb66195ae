#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cavmarl/sim/env.hpp"

namespace cavmarl::eval {

inline constexpr int kTraceSchemaVersion = 1;

class TraceFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TraceIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key/value view of a scenario; the same keys are accepted by config files.
nlohmann::json scenario_to_json(const sim::ScenarioConfig& cfg);
/// Keys absent from `j` keep the values of `base`. Unknown keys are rejected.
sim::ScenarioConfig scenario_from_json(const nlohmann::json& j, sim::ScenarioConfig base = {});

enum class Outcome { Success, Collision, Timeout };
std::string_view to_string(Outcome o);
Outcome parse_outcome(std::string_view s);

struct VehicleRecord {
  int id = -1;
  bool cav = false;
  double x = 0.0, y = 0.0, v = 0.0, psi = 0.0;
  double accel = 0.0;
  int route = -1;
  bool collided = false;

  friend bool operator==(const VehicleRecord&, const VehicleRecord&) = default;
};

/// World after one simulation sub-step (sim_step 0 is the initial state).
/// Vehicles that have left the network are omitted.
struct SubstepRecord {
  int sim_step = 0;
  double time = 0.0;
  std::vector<VehicleRecord> vehicles;

  friend bool operator==(const SubstepRecord&, const SubstepRecord&) = default;
};

struct AttentionRecord {
  std::vector<int> ids;
  std::vector<double> weights;

  friend bool operator==(const AttentionRecord&, const AttentionRecord&) = default;
};

struct CorrectionTrace {
  int agent = -1;
  int proposed = 0;
  int corrected = 0;
  std::vector<int> sed;
  int ci_before = 0;
  int ci_after = 0;

  friend bool operator==(const CorrectionTrace&, const CorrectionTrace&) = default;
};

/// One decision step.
struct DecisionRecord {
  int step = 0;
  std::vector<int> proposed;  // per agent, MetaAction as int
  std::vector<int> executed;
  std::vector<double> rewards;
  std::vector<bool> dones;
  std::vector<AttentionRecord> attention;  // per agent, empty without attention
  std::vector<int> rank;                   // vehicle ids, highest priority first
  std::vector<CorrectionTrace> corrections;
  std::vector<std::pair<int, int>> collisions;
  std::vector<int> arrivals;

  friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

struct EpisodeTrace {
  int schema_version = kTraceSchemaVersion;
  int episode = 0;
  std::uint64_t seed = 0;
  std::string variant;
  bool inspector = false;
  nlohmann::json scenario = nlohmann::json::object();
  std::vector<int> cav_ids;
  std::vector<SubstepRecord> substeps;
  std::vector<DecisionRecord> decisions;
  Outcome outcome = Outcome::Timeout;

  friend bool operator==(const EpisodeTrace&, const EpisodeTrace&) = default;
};

SubstepRecord snapshot(const sim::WorldState& world, double sim_dt);

/// Success iff every CAV arrived and none collided; collision if any CAV collided.
Outcome classify(const sim::WorldState& world);

// JSONL layout: a header object on the first line ("type": "header", with
// "schema_version"), then "substep" and "decision" lines in time order, and a
// closing "outcome" line.
std::string to_jsonl(const EpisodeTrace& trace);
EpisodeTrace from_jsonl(const std::string& text);

void write_trace(const EpisodeTrace& trace, const std::filesystem::path& path);
EpisodeTrace read_trace(const std::filesystem::path& path);

}  // namespace cavmarl::eval
