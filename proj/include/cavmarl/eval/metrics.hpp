#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "cavmarl/eval/trace.hpp"
#include "cavmarl/sim/network.hpp"

namespace cavmarl::eval {

struct PetSample {
  int zone = -1;
  int leader = -1;
  int follower = -1;
  double pet = 0.0;
};

struct PetResult {
  std::vector<PetSample> samples;
  int overlaps = 0;  // pairs whose occupancy intervals intersect
};

/// Fraction of successful episodes; rejects an empty list.
double success_rate(std::span<const EpisodeTrace> traces);

struct Footprint {
  double length = 5.0;
  double width = 2.0;
};

/// Occupancy interval of one vehicle in one zone, with entry and exit found by
/// bisection on linearly interpolated poses. Exit is +inf when the vehicle is
/// still inside at the end of the trace.
struct Occupancy {
  int vehicle = -1;
  double entry = 0.0;
  double exit = 0.0;
};

std::vector<Occupancy> zone_occupancy(const EpisodeTrace& trace, const sim::ConflictZone& zone, Footprint fp = {});

/// PET over every conflict zone for vehicle pairs on the zone's two routes,
/// at least one of them a CAV, taking each vehicle's first occupancy.
PetResult compute_pet(const EpisodeTrace& trace, std::span<const sim::ConflictZone> zones, Footprint fp = {});

/// Uses the network and vehicle size recorded in the trace header.
PetResult compute_pet(const EpisodeTrace& trace);

struct SeriesStats {
  std::vector<double> mean_speed;  // per sub-step index, over episodes and moving CAVs
  std::vector<double> mean_accel;
  std::vector<int> samples;
};

SeriesStats speed_accel_stats(std::span<const EpisodeTrace> traces);

struct EpisodeMetrics {
  int episode = 0;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::Timeout;
  int collisions = 0;  // collision events involving a CAV
  int arrivals = 0;    // CAVs that arrived
  int steps = 0;
  double mean_pet = 0.0;  // NaN when there are no samples
  int pet_samples = 0;
  double mean_speed = 0.0;
  double mean_abs_accel = 0.0;
};

EpisodeMetrics episode_metrics(const EpisodeTrace& trace);

/// Writes episode_<n>.jsonl per trace and metrics.csv into `dir`.
void export_traces(std::span<const EpisodeTrace> traces, const std::filesystem::path& dir);

inline constexpr const char* kMetricsHeader =
    "episode,seed,outcome,success,collisions,arrivals,steps,mean_pet,pet_samples,mean_speed,mean_abs_accel";

}  // namespace cavmarl::eval
