#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cavmarl/eval/metrics.hpp"
#include "cavmarl/marl/policy.hpp"

namespace cavmarl::marl {

struct EvalConfig {
  int episodes = 100;
  std::uint64_t seed = 0;
  bool record_traces = true;  // PET needs traces
  int workers = 1;
};

struct EvalResult {
  std::vector<eval::EpisodeTrace> traces;
  std::vector<EpisodeSummary> summaries;
  double success_rate = 0.0;
  int collisions = 0;         // CAVs that collided, summed over episodes
  double mean_pet = 0.0;      // pooled over all episodes; NaN without samples
  std::size_t pet_samples = 0;
};

/// Greedy rollouts of fixed actors on episode seeds drawn from the "eval"
/// stream of `cfg.seed`. Results do not depend on the worker count.
EvalResult evaluate(const sim::ScenarioConfig& scenario, std::span<const Actor* const> actors,
                    const PolicyConfig& policy, const EvalConfig& cfg);

}  // namespace cavmarl::marl
