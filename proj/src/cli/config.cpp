#include "cavmarl/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace cavmarl::cli {

using nlohmann::json;

sim::ScenarioConfig scenario_preset(const std::string& name) {
  sim::ScenarioConfig s;
  if (name == "single_lane") {
    s.lanes_per_approach = 1;
  } else if (name == "single_lane_mixed") {
    s = mixed_traffic_scenario();
  } else if (name == "two_lane" || name == "three_lane") {
    s.lanes_per_approach = name == "two_lane" ? 2 : 3;
    s.hv_mode = sim::HvStyleMode::Heterogeneous;
    s.hv_count_min = 4;
    s.hv_count_max = 8;
  } else {
    throw ConfigError("unknown scenario '" + name + "' (single_lane, single_lane_mixed, two_lane, three_lane)");
  }
  return s;
}

sim::ScenarioConfig mixed_traffic_scenario() {
  sim::ScenarioConfig s;
  s.hv_mode = sim::HvStyleMode::Heterogeneous;
  s.hv_count_min = 2;
  s.hv_count_max = 6;
  return s;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Numbers, booleans and quoted strings parse as JSON; anything else is a bare string.
json parse_value(const std::string& raw) {
  try {
    return json::parse(raw);
  } catch (const json::parse_error&) {
    return raw;
  }
}

std::set<std::string> keys_of(const json& j) {
  std::set<std::string> out;
  for (const auto& [k, v] : j.items()) out.insert(k);
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(origin + ":" + std::to_string(n) + ": empty key or value");
    if (!out.emplace(key, value).second) throw ConfigError(origin + ":" + std::to_string(n) + ": repeated key " + key);
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

RunConfig resolve_config(const std::map<std::string, std::string>& file, const Overrides& ov,
                         const std::optional<RunConfig>& base) {
  RunConfig cfg = base.value_or(RunConfig{});
  const auto get = [&file](const std::string& k) -> std::optional<std::string> {
    const auto it = file.find(k);
    return it == file.end() ? std::nullopt : std::optional(it->second);
  };
  const std::optional<std::string> named = ov.scenario ? ov.scenario : get("scenario");
  if (named || !base) {
    cfg.scenario_name = named.value_or("single_lane");
    cfg.scenario = scenario_preset(cfg.scenario_name);
  }

  const auto scen_keys = keys_of(eval::scenario_to_json(cfg.scenario));
  const auto train_keys = keys_of(marl::train_config_to_json(cfg.train));
  const auto policy_keys = keys_of(marl::policy_config_to_json(cfg.policy));
  json scen = json::object(), train = json::object(), policy = json::object();
  bool out_in_file = base.has_value();
  for (const auto& [k, raw] : file) {
    const json v = parse_value(raw);
    if (k == "scenario") continue;
    if (k == "run_id") {
      cfg.run_id = raw;
    } else if (k == "out") {
      cfg.out_dir = raw;
      out_in_file = true;
    } else if (k == "eval_episodes") {
      if (!v.is_number_integer() || v.get<int>() < 1) throw ConfigError("eval_episodes: expected a positive integer");
      cfg.eval_episodes = v.get<int>();
    } else if (scen_keys.count(k)) {
      scen[k] = v;
    } else if (train_keys.count(k)) {
      train[k] = v;
    } else if (policy_keys.count(k)) {
      policy[k] = v;
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  if (ov.variant) policy["variant"] = *ov.variant;
  if (ov.seed) train["seed"] = *ov.seed;
  if (ov.episodes) train["episodes"] = *ov.episodes;
  if (ov.workers) train["workers"] = *ov.workers;
  try {
    cfg.scenario = eval::scenario_from_json(scen, cfg.scenario);
    cfg.scenario.validate();
    cfg.train = marl::train_config_from_json(train, cfg.train);
    cfg.train.validate();
    cfg.policy = marl::policy_config_from_json(policy, cfg.policy);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  if (ov.out) {
    cfg.out_dir = *ov.out;
  } else if (!out_in_file) {
    cfg.out_dir = std::filesystem::path("runs") / cfg.run_id;
  }
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  json j = json::object();
  j["run_id"] = cfg.run_id;
  // A checkpoint's scenario has no preset name; its keys below describe it fully.
  if (cfg.scenario_name != "checkpoint") j["scenario"] = cfg.scenario_name;
  j["out"] = cfg.out_dir.string();
  j["eval_episodes"] = cfg.eval_episodes;
  for (const json& part : {eval::scenario_to_json(cfg.scenario), marl::train_config_to_json(cfg.train),
                           marl::policy_config_to_json(cfg.policy)}) {
    for (const auto& [k, v] : part.items()) j[k] = v;
  }
  return j;
}

std::string run_config_to_text(const RunConfig& cfg) {
  std::string s;
  const json j = run_config_to_json(cfg);
  for (const auto& [k, v] : j.items()) {
    // Bare words stay unquoted so the file reads like hand-written config.
    s += k + " = " + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
  }
  return s;
}

RunConfig run_config_from_checkpoint(const nn::Checkpoint& ck) {
  RunConfig cfg;
  try {
    cfg.scenario_name = "checkpoint";
    cfg.scenario = eval::scenario_from_json(ck.metadata.at("scenario"));
    cfg.train = marl::train_config_from_json(ck.metadata.at("train"));
    cfg.policy = marl::policy_config_from_json(ck.metadata.at("policy"));
  } catch (const json::exception& e) {
    throw nn::CheckpointError(std::string("checkpoint metadata incomplete: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw nn::CheckpointError(std::string("checkpoint metadata invalid: ") + e.what());
  }
  return cfg;
}

}  // namespace cavmarl::cli
