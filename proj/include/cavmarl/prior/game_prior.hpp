#pragma once

#include <map>
#include <span>
#include <vector>

namespace cavmarl::prior {

struct PriorConfig {
  double dis0 = 40.0;    // maximum interaction distance (m)
  double delta0 = 0.05;  // attention threshold
  int q_max = 5;         // interaction objects per CAV

  void validate() const;
};

struct InteractionEntry {
  int id = -1;
  double weight = 0.0;
  double distance = 0.0;

  friend bool operator==(const InteractionEntry&, const InteractionEntry&) = default;
};

/// Ordered by descending weight.
using InteractionSet = std::vector<InteractionEntry>;

/// Keeps vehicles with distance < dis0 and weight > delta0, sorted by weight
/// (then nearer, then lower id) and truncated to q_max.
InteractionSet select_interaction_objects(std::span<const int> ids, std::span<const double> weights,
                                          std::span<const double> distances, const PriorConfig& cfg);

/// BAt_j summed over every set containing j. Ids listed in `vehicle_ids` but
/// present in no set appear with 0.
std::map<int, double> global_attention(std::span<const InteractionSet> sets, std::span<const int> vehicle_ids = {});

struct LevelRank {
  std::vector<int> order;   // vehicle ids, highest priority first
  std::map<int, int> rank;  // id -> position in order
  std::map<int, double> bat;

  int rank_of(int id) const;
};

/// Descending BAt; ties (including all zeros) broken by lower id.
LevelRank rank_levels(const std::map<int, double>& bat);

}  // namespace cavmarl::prior
