#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavmarl/marl/maddpg.hpp"
#include "cavmarl/marl/policy.hpp"

namespace cavmarl::marl {

struct TrainConfig {
  int episodes = 2000;
  int steps_per_update = 100;
  std::size_t batch = 128;
  double gamma = 0.95;
  double tau = 0.01;
  double lr = 0.01;
  std::size_t buffer = 10000;
  double eps_start = 0.3;
  double eps_end = 0.05;
  double temp_start = 1.0;
  double temp_end = 0.5;
  int anneal_episodes = 0;  // 0: anneal over the whole run
  std::uint64_t seed = 0;
  int checkpoint_every = 100;
  int workers = 1;

  void validate() const;
  LearnerConfig learner() const;
  ExploreParams explore_at(int episode) const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Keys absent from `j` keep the values of `base`; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json policy_config_to_json(const PolicyConfig& cfg);
PolicyConfig policy_config_from_json(const nlohmann::json& j, PolicyConfig base = {});

/// Seed of the k-th episode drawn from a named stream of the root seed.
std::uint64_t episode_seed(std::uint64_t root, std::string_view stream, int k);

struct TrainLogRow {
  int episode = 0;
  std::array<double, sim::kNumAgents> rewards{};
  double mean_reward = 0.0;
  int collisions = 0;
  int arrivals = 0;
  int steps = 0;
  eval::Outcome outcome = eval::Outcome::Timeout;
  double epsilon = 0.0;
  double temperature = 0.0;
  int updates = 0;  // update rounds so far
  double critic_loss = 0.0;  // mean over agents of the latest round
};

inline constexpr const char* kTrainLogHeader =
    "episode,reward_0,reward_1,reward_2,reward_3,mean_reward,collisions,arrivals,steps,outcome,epsilon,temperature,"
    "updates,critic_loss";

std::string format_log_row(const TrainLogRow& row);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // nothing is written when absent
  std::optional<std::filesystem::path> resume;   // checkpoint to continue from
  std::string version = "dev";
  /// Called after every episode (for progress reporting).
  std::function<void(const TrainLogRow&)> on_episode;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::unique_ptr<Learner> learner;
  std::vector<std::filesystem::path> checkpoints;
  long long env_steps = 0;
};

/// The training loop: act with exploration (and the inspector for
/// ma_ga_ddpg), store executed transitions, and run one update round every
/// `steps_per_update` environment steps once the buffer holds a batch.
TrainResult train(const TrainConfig& cfg, const sim::ScenarioConfig& scenario, const PolicyConfig& policy,
                  const TrainOptions& opt = {});

/// Checkpoint of a learner with run metadata.
nn::Checkpoint make_checkpoint(const Learner& learner, int episodes_done, long long env_steps,
                               const TrainConfig& cfg, const sim::ScenarioConfig& scenario,
                               const PolicyConfig& policy, const std::string& version);

/// Rebuilds a learner from a checkpoint written by make_checkpoint.
std::unique_ptr<Learner> learner_from_checkpoint(const nn::Checkpoint& ck);

}  // namespace cavmarl::marl
