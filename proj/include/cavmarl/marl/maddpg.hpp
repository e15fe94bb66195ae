#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "cavmarl/marl/networks.hpp"
#include "cavmarl/marl/replay.hpp"

namespace cavmarl::marl {

struct ExploreParams {
  bool explore = false;
  double epsilon = 0.0;      // probability of a uniformly random action
  double temperature = 1.0;  // Gumbel-softmax temperature
};

/// Result of running one actor on one observation.
struct ActDecision {
  sim::MetaAction action = sim::MetaAction::Idle;
  nn::Tensor logits;   // 1 x kNumActions
  nn::Tensor relaxed;  // soft sample when exploring, one-hot otherwise
  bool has_attention = false;
  // Combined attention over the observed vehicles other than the ego.
  std::vector<int> ids;
  std::vector<double> weights;
  std::vector<double> distances;
  std::vector<double> row_weights;  // over all observation rows, ego included
};

/// Decentralized execution: reads only this agent's actor and observation.
ActDecision actor_forward(const Actor& actor, const sim::Observation& obs, const ExploreParams& ex, Rng& rng);

using Batch = std::span<const Transition* const>;

/// B x (agents * obs width): scaled, flattened observations of every agent.
nn::Tensor joint_observations(Batch batch, bool next);
/// B x kNumActions one-hot of agent j's stored action.
nn::Tensor action_onehots(Batch batch, int agent);
/// Greedy one-hot actions of `actor` on agent j's observations.
nn::Tensor greedy_onehots(const Actor& actor, Batch batch, int agent, bool next);

struct LearnerConfig {
  double gamma = 0.95;
  double tau = 0.01;
  std::size_t batch = 128;
  nn::AdamConfig adam;
  NetShape shape;

  void validate() const;
};

/// TD regression of agent i's critic toward r + gamma * Q'(x', a'), with a'
/// from the target actors acting greedily and no bootstrap for finished agents.
double critic_update(AgentNets& nets, int agent, Batch batch, std::span<const Actor* const> target_actors,
                     double gamma);

/// Mean Q of agent i with its own action replaced by the actor's relaxed
/// sample; `straight_through` selects the hard forward path.
nn::Var actor_objective(nn::Tape& tape, Actor& actor, const Critic& critic, int agent, Batch batch,
                        const nn::Tensor& noise, double temperature, bool straight_through);

/// One ascent step on the objective above; returns the objective value.
double actor_update(AgentNets& nets, int agent, Batch batch, double temperature, Rng& rng);

struct UpdateStats {
  std::array<double, sim::kNumAgents> critic_loss{};
  std::array<double, sim::kNumAgents> actor_objective{};
};

/// Behaviour and target networks of every agent.
class Learner {
 public:
  Learner(Variant variant, LearnerConfig cfg, std::uint64_t init_seed);

  Variant variant() const { return variant_; }
  const LearnerConfig& config() const { return cfg_; }
  AgentNets& agent(int i) { return *nets_.at(static_cast<std::size_t>(i)); }
  const AgentNets& agent(int i) const { return *nets_.at(static_cast<std::size_t>(i)); }
  std::vector<const Actor*> actors() const;
  std::vector<const Actor*> target_actors() const;

  /// Critic then actor step for every agent, followed by soft target updates.
  UpdateStats update(Batch batch, double temperature, Rng& rng);
  void soft_update_targets();

  nn::Checkpoint to_checkpoint() const;
  /// Restores parameters and optimizer state; the variant must match.
  void load_checkpoint(const nn::Checkpoint& ck);

 private:
  Variant variant_;
  LearnerConfig cfg_;
  std::vector<std::unique_ptr<AgentNets>> nets_;
};

}  // namespace cavmarl::marl
