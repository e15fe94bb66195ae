#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cavmarl/marl/trainer.hpp"

namespace cavmarl::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Named scenarios: single_lane is CAV-only, two_lane and three_lane carry
/// heterogeneous HV traffic.
sim::ScenarioConfig scenario_preset(const std::string& name);
/// Single-lane intersection with heterogeneous HVs.
sim::ScenarioConfig mixed_traffic_scenario();

/// Raw `key = value` pairs. Blank lines and `#` comments are skipped;
/// repeated keys are an error.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin = "config");
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

struct RunConfig {
  std::string run_id = "run";
  std::string scenario_name = "single_lane";
  sim::ScenarioConfig scenario = scenario_preset("single_lane");
  marl::TrainConfig train;
  marl::PolicyConfig policy;
  int eval_episodes = 100;
  std::filesystem::path out_dir = "runs/run";
};

/// Values the command line may override; absent ones leave the file values.
struct Overrides {
  std::optional<std::string> variant;
  std::optional<std::string> scenario;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<int> workers;
  std::optional<std::filesystem::path> out;
};

/// Preset (or `base`), then file keys, then overrides. With a base the preset
/// replaces its scenario only when a scenario is named explicitly. Throws
/// ConfigError on unknown keys or values that do not parse.
RunConfig resolve_config(const std::map<std::string, std::string>& file, const Overrides& ov,
                         const std::optional<RunConfig>& base = std::nullopt);

/// Flat key set accepted in config files, with the resolved values.
nlohmann::json run_config_to_json(const RunConfig& cfg);
/// The same keys as `key = value` lines, readable by read_config_file.
std::string run_config_to_text(const RunConfig& cfg);

/// Run settings recorded in a checkpoint written by the trainer.
RunConfig run_config_from_checkpoint(const nn::Checkpoint& ck);

}  // namespace cavmarl::cli
