#include "cavmarl/prior/game_prior.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace cavmarl::prior {

void PriorConfig::validate() const {
  if (!(dis0 > 0.0)) throw std::invalid_argument("prior: dis0 must be positive");
  if (!(delta0 >= 0.0 && delta0 < 1.0)) throw std::invalid_argument("prior: delta0 must lie in [0, 1)");
  if (q_max < 1) throw std::invalid_argument("prior: q_max must be at least 1");
}

InteractionSet select_interaction_objects(std::span<const int> ids, std::span<const double> weights,
                                          std::span<const double> distances, const PriorConfig& cfg) {
  if (ids.size() != weights.size() || ids.size() != distances.size()) {
    throw std::invalid_argument("select_interaction_objects: ids, weights and distances differ in length");
  }
  InteractionSet out;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (distances[k] < cfg.dis0 && weights[k] > cfg.delta0) out.push_back({ids[k], weights[k], distances[k]});
  }
  std::sort(out.begin(), out.end(), [](const InteractionEntry& a, const InteractionEntry& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
  });
  if (out.size() > static_cast<std::size_t>(cfg.q_max)) out.resize(static_cast<std::size_t>(cfg.q_max));
  return out;
}

std::map<int, double> global_attention(std::span<const InteractionSet> sets, std::span<const int> vehicle_ids) {
  std::map<int, double> bat;
  for (int id : vehicle_ids) bat.emplace(id, 0.0);
  for (const InteractionSet& s : sets) {
    for (const InteractionEntry& e : s) bat[e.id] += e.weight;
  }
  return bat;
}

int LevelRank::rank_of(int id) const {
  auto it = rank.find(id);
  if (it == rank.end()) throw std::out_of_range("LevelRank: vehicle " + std::to_string(id) + " is not ranked");
  return it->second;
}

LevelRank rank_levels(const std::map<int, double>& bat) {
  LevelRank r;
  r.bat = bat;
  for (const auto& entry : bat) r.order.push_back(entry.first);
  std::stable_sort(r.order.begin(), r.order.end(), [&bat](int a, int b) {
    const double wa = bat.at(a), wb = bat.at(b);
    if (wa != wb) return wa > wb;
    return a < b;
  });
  for (std::size_t i = 0; i < r.order.size(); ++i) r.rank[r.order[i]] = static_cast<int>(i);
  return r;
}

}  // namespace cavmarl::prior
