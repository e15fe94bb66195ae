#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "cavmarl/eval/trace.hpp"
#include "cavmarl/marl/maddpg.hpp"
#include "cavmarl/prior/game_prior.hpp"
#include "cavmarl/safety/inspector.hpp"

namespace cavmarl::marl {

struct PolicyConfig {
  Variant variant = Variant::MaGaDdpg;
  bool inspector = true;  // only honoured for ma_ga_ddpg
  prior::PriorConfig prior;
  safety::InspectorConfig safety;

  bool inspector_active() const { return variant == Variant::MaGaDdpg && inspector; }
};

struct JointDecision {
  std::array<sim::MetaAction, sim::kNumAgents> proposed{};
  std::array<sim::MetaAction, sim::kNumAgents> executed{};
  std::vector<ActDecision> acts;  // per agent; default for finished agents
  std::vector<prior::InteractionSet> sets;
  std::optional<prior::LevelRank> rank;
  std::optional<safety::CorrectionResult> correction;
};

/// Priors from the agents' attention: interaction sets, global attention over
/// the unfinished CAVs and the vehicles they selected, and the level ranking.
std::pair<std::vector<prior::InteractionSet>, prior::LevelRank> compute_priors(
    const sim::WorldState& world, std::span<const ActDecision> acts, const prior::PriorConfig& cfg);

/// Per-agent actions, then priors and safety correction when the inspector is active.
JointDecision decide(const sim::IntersectionEnv& env, const sim::WorldState& world,
                     std::span<const sim::Observation> obs, std::span<const Actor* const> actors,
                     const PolicyConfig& cfg, const ExploreParams& ex, Rng& rng);

struct EpisodeSummary {
  std::array<double, sim::kNumAgents> rewards{};  // summed per agent
  int collisions = 0;  // CAVs that collided
  int arrivals = 0;    // CAVs that arrived
  int steps = 0;
  eval::Outcome outcome = eval::Outcome::Timeout;
  double mean_reward() const;
};

struct EpisodeRun {
  EpisodeSummary summary;
  std::vector<Transition> transitions;  // filled when requested
  std::optional<eval::EpisodeTrace> trace;
};

struct EpisodeOptions {
  bool keep_transitions = false;
  bool record_trace = false;
  int episode_index = 0;
};

/// Plays one episode from `episode_seed`. Stored actions are the executed ones.
EpisodeRun run_episode(const sim::IntersectionEnv& env, std::uint64_t episode_seed,
                       std::span<const Actor* const> actors, const PolicyConfig& cfg, const ExploreParams& ex,
                       Rng& rng, const EpisodeOptions& opt);

/// Re-simulates a trace from its seed and executed actions and compares every
/// recorded sub-step and decision outcome bit for bit. Returns the first
/// mismatch description, or nullopt when identical.
std::optional<std::string> replay_trace(const eval::EpisodeTrace& trace, std::vector<std::string>* narration = nullptr);

}  // namespace cavmarl::marl
