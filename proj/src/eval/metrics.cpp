#include "cavmarl/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <set>

namespace cavmarl::eval {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Pose {
  double t, x, y, psi;
};

Pose lerp(const Pose& a, const Pose& b, double alpha) {
  return {a.t + alpha * (b.t - a.t), a.x + alpha * (b.x - a.x), a.y + alpha * (b.y - a.y),
          sim::normalize_angle(a.psi + alpha * sim::normalize_angle(b.psi - a.psi))};
}

bool inside(const Pose& p, const sim::ConvexPolygon& poly, Footprint fp) {
  return sim::overlaps(sim::OrientedRect{{p.x, p.y}, p.psi, fp.length, fp.width}, poly);
}

// Time at which occupancy flips between `a` (state `a_in`) and `b`.
double crossing(const Pose& a, const Pose& b, bool a_in, const sim::ConvexPolygon& poly, Footprint fp) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (inside(lerp(a, b, mid), poly, fp) == a_in) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lerp(a, b, 0.5 * (lo + hi)).t;
}

struct Track {
  int id = -1;
  bool cav = false;
  int route = -1;
  std::vector<Pose> poses;
};

std::map<int, Track> tracks_of(const EpisodeTrace& trace) {
  std::map<int, Track> tracks;
  for (const SubstepRecord& s : trace.substeps) {
    for (const VehicleRecord& v : s.vehicles) {
      Track& tr = tracks[v.id];
      tr.id = v.id;
      tr.cav = v.cav;
      tr.route = v.route;
      tr.poses.push_back({s.time, v.x, v.y, v.psi});
    }
  }
  return tracks;
}

std::optional<Occupancy> first_occupancy(const Track& tr, const sim::ConvexPolygon& poly, Footprint fp) {
  const auto& p = tr.poses;
  std::size_t k = 0;
  while (k < p.size() && !inside(p[k], poly, fp)) ++k;
  if (k == p.size()) return std::nullopt;
  Occupancy occ;
  occ.vehicle = tr.id;
  occ.entry = k == 0 ? p[0].t : crossing(p[k - 1], p[k], false, poly, fp);
  std::size_t m = k + 1;
  while (m < p.size() && inside(p[m], poly, fp)) ++m;
  occ.exit = m == p.size() ? kInf : crossing(p[m - 1], p[m], true, poly, fp);
  return occ;
}

std::shared_ptr<const sim::RoadNetwork> cached_network(int lanes) {
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const sim::RoadNetwork>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[lanes];
  if (!slot) slot = std::make_shared<const sim::RoadNetwork>(lanes);
  return slot;
}

}  // namespace

double success_rate(std::span<const EpisodeTrace> traces) {
  if (traces.empty()) throw std::invalid_argument("success_rate: no episodes");
  const auto n = std::count_if(traces.begin(), traces.end(),
                               [](const EpisodeTrace& t) { return t.outcome == Outcome::Success; });
  return static_cast<double>(n) / static_cast<double>(traces.size());
}

std::vector<Occupancy> zone_occupancy(const EpisodeTrace& trace, const sim::ConflictZone& zone, Footprint fp) {
  std::vector<Occupancy> out;
  for (const auto& [id, tr] : tracks_of(trace)) {
    if (auto occ = first_occupancy(tr, zone.polygon, fp)) out.push_back(*occ);
  }
  return out;
}

PetResult compute_pet(const EpisodeTrace& trace, std::span<const sim::ConflictZone> zones, Footprint fp) {
  PetResult res;
  const auto tracks = tracks_of(trace);
  for (const sim::ConflictZone& z : zones) {
    std::vector<std::pair<const Track*, Occupancy>> on_a, on_b;
    for (const auto& [id, tr] : tracks) {
      if (tr.route != z.route_a && tr.route != z.route_b) continue;
      auto occ = first_occupancy(tr, z.polygon, fp);
      if (!occ) continue;
      (tr.route == z.route_a ? on_a : on_b).emplace_back(&tr, *occ);
    }
    for (const auto& [ta, oa] : on_a) {
      for (const auto& [tb, ob] : on_b) {
        if (!ta->cav && !tb->cav) continue;
        if (oa.exit < ob.entry) {
          res.samples.push_back({z.id, ta->id, tb->id, ob.entry - oa.exit});
        } else if (ob.exit < oa.entry) {
          res.samples.push_back({z.id, tb->id, ta->id, oa.entry - ob.exit});
        } else {
          ++res.overlaps;
        }
      }
    }
  }
  return res;
}

PetResult compute_pet(const EpisodeTrace& trace) {
  const sim::ScenarioConfig cfg = scenario_from_json(trace.scenario);
  const auto net = cached_network(cfg.lanes_per_approach);
  return compute_pet(trace, net->conflict_zones(), Footprint{cfg.vehicle_length, cfg.vehicle_width});
}

SeriesStats speed_accel_stats(std::span<const EpisodeTrace> traces) {
  if (traces.empty()) throw std::invalid_argument("speed_accel_stats: no episodes");
  SeriesStats st;
  for (const EpisodeTrace& t : traces) {
    for (std::size_t k = 0; k < t.substeps.size(); ++k) {
      if (st.samples.size() <= k) {
        st.samples.resize(k + 1, 0);
        st.mean_speed.resize(k + 1, 0.0);
        st.mean_accel.resize(k + 1, 0.0);
      }
      for (const VehicleRecord& v : t.substeps[k].vehicles) {
        if (!v.cav || v.collided) continue;
        st.mean_speed[k] += v.v;
        st.mean_accel[k] += v.accel;
        ++st.samples[k];
      }
    }
  }
  for (std::size_t k = 0; k < st.samples.size(); ++k) {
    if (st.samples[k] == 0) continue;
    st.mean_speed[k] /= st.samples[k];
    st.mean_accel[k] /= st.samples[k];
  }
  return st;
}

EpisodeMetrics episode_metrics(const EpisodeTrace& trace) {
  EpisodeMetrics m;
  m.episode = trace.episode;
  m.seed = trace.seed;
  m.outcome = trace.outcome;
  m.steps = static_cast<int>(trace.decisions.size());
  const std::set<int> cavs(trace.cav_ids.begin(), trace.cav_ids.end());
  for (const DecisionRecord& d : trace.decisions) {
    for (const auto& [a, b] : d.collisions) m.collisions += (cavs.count(a) || cavs.count(b)) ? 1 : 0;
    for (int id : d.arrivals) m.arrivals += cavs.count(id) ? 1 : 0;
  }
  const PetResult pet = compute_pet(trace);
  m.pet_samples = static_cast<int>(pet.samples.size());
  if (pet.samples.empty()) {
    m.mean_pet = std::numeric_limits<double>::quiet_NaN();
  } else {
    double s = 0.0;
    for (const auto& p : pet.samples) s += p.pet;
    m.mean_pet = s / static_cast<double>(pet.samples.size());
  }
  double vs = 0.0, as = 0.0;
  long n = 0;
  for (const SubstepRecord& s : trace.substeps) {
    for (const VehicleRecord& v : s.vehicles) {
      if (!v.cav || v.collided) continue;
      vs += v.v;
      as += std::abs(v.accel);
      ++n;
    }
  }
  if (n > 0) {
    m.mean_speed = vs / static_cast<double>(n);
    m.mean_abs_accel = as / static_cast<double>(n);
  }
  return m;
}

void export_traces(std::span<const EpisodeTrace> traces, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw TraceIoError("cannot create " + dir.string() + ": " + ec.message());
  const auto csv_path = dir / "metrics.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw TraceIoError("cannot open " + csv_path.string() + " for writing");
  csv << "# schema_version=" << kTraceSchemaVersion << "\n" << kMetricsHeader << "\n";
  csv.precision(17);
  for (const EpisodeTrace& t : traces) {
    write_trace(t, dir / ("episode_" + std::to_string(t.episode) + ".jsonl"));
    const EpisodeMetrics m = episode_metrics(t);
    csv << m.episode << ',' << m.seed << ',' << to_string(m.outcome) << ','
        << (m.outcome == Outcome::Success ? 1 : 0) << ',' << m.collisions << ',' << m.arrivals << ',' << m.steps
        << ',';
    if (!std::isnan(m.mean_pet)) csv << m.mean_pet;
    csv << ',' << m.pet_samples << ',' << m.mean_speed << ',' << m.mean_abs_accel << "\n";
  }
  if (!csv) throw TraceIoError("write failed for " + csv_path.string());
}

}  // namespace cavmarl::eval
