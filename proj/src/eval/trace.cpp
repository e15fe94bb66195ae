#include "cavmarl/eval/trace.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace cavmarl::eval {

using nlohmann::json;

namespace {

struct DoubleKey {
  const char* name;
  double sim::ScenarioConfig::*field;
};
struct IntKey {
  const char* name;
  int sim::ScenarioConfig::*field;
};

constexpr DoubleKey kDoubleKeys[] = {
    {"cav_spawn_min", &sim::ScenarioConfig::cav_spawn_min},
    {"cav_spawn_max", &sim::ScenarioConfig::cav_spawn_max},
    {"hv_spawn_min", &sim::ScenarioConfig::hv_spawn_min},
    {"hv_spawn_max", &sim::ScenarioConfig::hv_spawn_max},
    {"hv_min_spacing", &sim::ScenarioConfig::hv_min_spacing},
    {"hv_v0_min", &sim::ScenarioConfig::hv_v0_min},
    {"hv_v0_max", &sim::ScenarioConfig::hv_v0_max},
    {"sim_dt", &sim::ScenarioConfig::sim_dt},
    {"perception_range", &sim::ScenarioConfig::perception_range},
    {"dv_cmd", &sim::ScenarioConfig::dv_cmd},
    {"v_cmd_max", &sim::ScenarioConfig::v_cmd_max},
    {"hv_horizon", &sim::ScenarioConfig::hv_horizon},
    {"vehicle_length", &sim::ScenarioConfig::vehicle_length},
    {"vehicle_width", &sim::ScenarioConfig::vehicle_width},
};

constexpr IntKey kIntKeys[] = {
    {"lanes_per_approach", &sim::ScenarioConfig::lanes_per_approach},
    {"hv_count_min", &sim::ScenarioConfig::hv_count_min},
    {"hv_count_max", &sim::ScenarioConfig::hv_count_max},
    {"spawn_retries", &sim::ScenarioConfig::spawn_retries},
    {"substeps", &sim::ScenarioConfig::substeps},
    {"horizon", &sim::ScenarioConfig::horizon},
    {"obs_rows", &sim::ScenarioConfig::obs_rows},
};

// Nested members, addressed as (key, accessor).
struct NestedKey {
  const char* name;
  double& (*get)(sim::ScenarioConfig&);
};

constexpr NestedKey kNestedKeys[] = {
    {"kp_lat", [](sim::ScenarioConfig& c) -> double& { return c.gains.kp_lat; }},
    {"kp_psi", [](sim::ScenarioConfig& c) -> double& { return c.gains.kp_psi; }},
    {"kp_v", [](sim::ScenarioConfig& c) -> double& { return c.gains.kp_v; }},
    {"wheelbase", [](sim::ScenarioConfig& c) -> double& { return c.gains.wheelbase_l; }},
    {"a_min", [](sim::ScenarioConfig& c) -> double& { return c.limits.a_min; }},
    {"a_max", [](sim::ScenarioConfig& c) -> double& { return c.limits.a_max; }},
    {"steer_max", [](sim::ScenarioConfig& c) -> double& { return c.limits.steer_max; }},
    {"w_c", [](sim::ScenarioConfig& c) -> double& { return c.reward.w_c; }},
    {"w_e", [](sim::ScenarioConfig& c) -> double& { return c.reward.w_e; }},
    {"w_a", [](sim::ScenarioConfig& c) -> double& { return c.reward.w_a; }},
    {"c_e", [](sim::ScenarioConfig& c) -> double& { return c.reward.c_e; }},
    {"v_min", [](sim::ScenarioConfig& c) -> double& { return c.reward.v_min; }},
    {"v_max", [](sim::ScenarioConfig& c) -> double& { return c.reward.v_max; }},
    {"collision_penalty", [](sim::ScenarioConfig& c) -> double& { return c.reward.collision_penalty; }},
    {"arrival_bonus", [](sim::ScenarioConfig& c) -> double& { return c.reward.arrival_bonus; }},
};

sim::HvStyleMode parse_hv_mode(const std::string& s) {
  for (auto m : {sim::HvStyleMode::None, sim::HvStyleMode::Homogeneous, sim::HvStyleMode::Heterogeneous}) {
    if (sim::to_string(m) == s) return m;
  }
  throw std::invalid_argument("hv_mode: unknown value '" + s + "' (none, homogeneous, heterogeneous)");
}

sim::CavMovement parse_cav_movement(const std::string& s) {
  for (auto m : {sim::CavMovement::Left, sim::CavMovement::Straight, sim::CavMovement::Right,
                 sim::CavMovement::Random}) {
    if (sim::to_string(m) == s) return m;
  }
  throw std::invalid_argument("cav_movement: unknown value '" + s + "' (left, straight, right, random)");
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw std::invalid_argument(key + ": expected a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& key) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == static_cast<double>(static_cast<int>(d))) return static_cast<int>(d);
  }
  throw std::invalid_argument(key + ": expected an integer");
}

json vehicle_to_json(const VehicleRecord& v) {
  return json{{"id", v.id}, {"cav", v.cav},       {"x", v.x},         {"y", v.y},
              {"v", v.v},   {"psi", v.psi},       {"accel", v.accel}, {"route", v.route},
              {"collided", v.collided}};
}

VehicleRecord vehicle_from_json(const json& j) {
  VehicleRecord v;
  v.id = j.at("id").get<int>();
  v.cav = j.at("cav").get<bool>();
  v.x = j.at("x").get<double>();
  v.y = j.at("y").get<double>();
  v.v = j.at("v").get<double>();
  v.psi = j.at("psi").get<double>();
  v.accel = j.at("accel").get<double>();
  v.route = j.at("route").get<int>();
  v.collided = j.at("collided").get<bool>();
  return v;
}

json decision_to_json(const DecisionRecord& d) {
  json att = json::array();
  for (const auto& a : d.attention) att.push_back(json{{"ids", a.ids}, {"weights", a.weights}});
  json corr = json::array();
  for (const auto& c : d.corrections) {
    corr.push_back(json{{"agent", c.agent},
                        {"proposed", c.proposed},
                        {"corrected", c.corrected},
                        {"sed", c.sed},
                        {"ci_before", c.ci_before},
                        {"ci_after", c.ci_after}});
  }
  json col = json::array();
  for (const auto& [a, b] : d.collisions) col.push_back(json::array({a, b}));
  return json{{"type", "decision"},   {"step", d.step},       {"proposed", d.proposed}, {"executed", d.executed},
              {"rewards", d.rewards}, {"dones", d.dones},     {"attention", att},       {"rank", d.rank},
              {"corrections", corr},  {"collisions", col},    {"arrivals", d.arrivals}};
}

DecisionRecord decision_from_json(const json& j) {
  DecisionRecord d;
  d.step = j.at("step").get<int>();
  d.proposed = j.at("proposed").get<std::vector<int>>();
  d.executed = j.at("executed").get<std::vector<int>>();
  d.rewards = j.at("rewards").get<std::vector<double>>();
  d.dones = j.at("dones").get<std::vector<bool>>();
  for (const auto& a : j.at("attention")) {
    d.attention.push_back({a.at("ids").get<std::vector<int>>(), a.at("weights").get<std::vector<double>>()});
  }
  d.rank = j.at("rank").get<std::vector<int>>();
  for (const auto& c : j.at("corrections")) {
    d.corrections.push_back({c.at("agent").get<int>(), c.at("proposed").get<int>(), c.at("corrected").get<int>(),
                             c.at("sed").get<std::vector<int>>(), c.at("ci_before").get<int>(),
                             c.at("ci_after").get<int>()});
  }
  for (const auto& p : j.at("collisions")) d.collisions.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  d.arrivals = j.at("arrivals").get<std::vector<int>>();
  return d;
}

}  // namespace

json scenario_to_json(const sim::ScenarioConfig& cfg) {
  json j = json::object();
  for (const auto& k : kIntKeys) j[k.name] = cfg.*(k.field);
  for (const auto& k : kDoubleKeys) j[k.name] = cfg.*(k.field);
  sim::ScenarioConfig copy = cfg;
  for (const auto& k : kNestedKeys) j[k.name] = k.get(copy);
  j["hv_mode"] = std::string(sim::to_string(cfg.hv_mode));
  j["hv_style"] = std::string(sim::to_string(cfg.hv_style));
  j["cav_movement"] = std::string(sim::to_string(cfg.cav_movement));
  return j;
}

sim::ScenarioConfig scenario_from_json(const json& j, sim::ScenarioConfig base) {
  if (!j.is_object()) throw std::invalid_argument("scenario: expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto& k : kIntKeys) {
      if (key == k.name) {
        base.*(k.field) = as_int(value, key);
        known = true;
      }
    }
    for (const auto& k : kDoubleKeys) {
      if (key == k.name) {
        base.*(k.field) = as_double(value, key);
        known = true;
      }
    }
    for (const auto& k : kNestedKeys) {
      if (key == k.name) {
        k.get(base) = as_double(value, key);
        known = true;
      }
    }
    if (key == "hv_mode") {
      base.hv_mode = parse_hv_mode(value.get<std::string>());
      known = true;
    } else if (key == "hv_style") {
      const auto s = sim::parse_style(value.get<std::string>());
      if (!s) throw std::invalid_argument("hv_style: unknown value '" + value.get<std::string>() + "'");
      base.hv_style = *s;
      known = true;
    } else if (key == "cav_movement") {
      base.cav_movement = parse_cav_movement(value.get<std::string>());
      known = true;
    }
    if (!known) throw std::invalid_argument("scenario: unknown key '" + key + "'");
  }
  return base;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Collision: return "collision";
    case Outcome::Timeout: return "timeout";
  }
  return "?";
}

Outcome parse_outcome(std::string_view s) {
  for (auto o : {Outcome::Success, Outcome::Collision, Outcome::Timeout}) {
    if (to_string(o) == s) return o;
  }
  throw TraceFormatError("unknown outcome '" + std::string(s) + "'");
}

SubstepRecord snapshot(const sim::WorldState& world, double sim_dt) {
  SubstepRecord r;
  r.sim_step = world.sim_step;
  r.time = world.sim_step * sim_dt;
  for (const sim::Vehicle& v : world.vehicles) {
    if (!v.on_road()) continue;
    r.vehicles.push_back({v.id, v.kind == sim::VehicleKind::Cav, v.state.x, v.state.y, v.state.v, v.state.psi,
                          v.accel, v.state.lane_id, v.collided});
  }
  return r;
}

Outcome classify(const sim::WorldState& world) {
  bool all_arrived = true;
  for (int i = 0; i < sim::kNumAgents; ++i) {
    const sim::Vehicle& c = world.cav(i);
    if (c.collided) return Outcome::Collision;
    all_arrived = all_arrived && c.arrived;
  }
  return all_arrived ? Outcome::Success : Outcome::Timeout;
}

std::string to_jsonl(const EpisodeTrace& t) {
  std::string out;
  json header{{"type", "header"},       {"schema_version", t.schema_version}, {"episode", t.episode},
              {"seed", t.seed},         {"variant", t.variant},               {"inspector", t.inspector},
              {"scenario", t.scenario}, {"cav_ids", t.cav_ids}};
  out += header.dump() + "\n";
  // Interleave by time: decision k is emitted after the sub-steps it produced.
  std::size_t d = 0;
  const int substeps = t.scenario.contains("substeps") ? t.scenario.at("substeps").get<int>() : 10;
  for (const SubstepRecord& s : t.substeps) {
    json vs = json::array();
    for (const auto& v : s.vehicles) vs.push_back(vehicle_to_json(v));
    out += json{{"type", "substep"}, {"sim_step", s.sim_step}, {"time", s.time}, {"vehicles", vs}}.dump() + "\n";
    while (d < t.decisions.size() && (t.decisions[d].step + 1) * substeps <= s.sim_step) {
      out += decision_to_json(t.decisions[d++]).dump() + "\n";
    }
  }
  for (; d < t.decisions.size(); ++d) out += decision_to_json(t.decisions[d]).dump() + "\n";
  out += json{{"type", "outcome"}, {"outcome", std::string(to_string(t.outcome))}}.dump() + "\n";
  return out;
}

EpisodeTrace from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  EpisodeTrace t;
  bool have_header = false, have_outcome = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (!have_header) {
        if (type != "header") throw TraceFormatError("first record must be the header");
        t.schema_version = j.at("schema_version").get<int>();
        if (t.schema_version != kTraceSchemaVersion) {
          throw TraceFormatError("unsupported trace schema version " + std::to_string(t.schema_version) +
                                 " (expected " + std::to_string(kTraceSchemaVersion) + ")");
        }
        t.episode = j.at("episode").get<int>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.variant = j.at("variant").get<std::string>();
        t.inspector = j.at("inspector").get<bool>();
        t.scenario = j.at("scenario");
        t.cav_ids = j.at("cav_ids").get<std::vector<int>>();
        have_header = true;
      } else if (type == "substep") {
        SubstepRecord s;
        s.sim_step = j.at("sim_step").get<int>();
        s.time = j.at("time").get<double>();
        for (const auto& v : j.at("vehicles")) s.vehicles.push_back(vehicle_from_json(v));
        t.substeps.push_back(std::move(s));
      } else if (type == "decision") {
        t.decisions.push_back(decision_from_json(j));
      } else if (type == "outcome") {
        t.outcome = parse_outcome(j.at("outcome").get<std::string>());
        have_outcome = true;
      } else {
        throw TraceFormatError("unknown record type '" + type + "'");
      }
    } catch (const TraceFormatError& e) {
      throw TraceFormatError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw TraceFormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw TraceFormatError("trace has no header");
  if (!have_outcome) throw TraceFormatError("trace has no outcome record");
  return t;
}

void write_trace(const EpisodeTrace& trace, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw TraceIoError("cannot open " + path.string() + " for writing");
  f << to_jsonl(trace);
  if (!f) throw TraceIoError("write failed for " + path.string());
}

EpisodeTrace read_trace(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw TraceIoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return from_jsonl(ss.str());
  } catch (const TraceFormatError& e) {
    throw TraceFormatError(path.string() + ": " + e.what());
  }
}

}  // namespace cavmarl::eval
