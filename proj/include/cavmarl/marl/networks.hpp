#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cavmarl/nn/adam.hpp"
#include "cavmarl/nn/checkpoint.hpp"
#include "cavmarl/nn/layers.hpp"
#include "cavmarl/sim/env.hpp"

namespace cavmarl::marl {

enum class Variant { Maddpg, AttentionMaddpg, MaGaDdpg };
std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view s);
inline bool uses_attention(Variant v) { return v != Variant::Maddpg; }

struct NetShape {
  std::size_t obs_rows = 8;
  std::size_t hidden = 64;   // encoder / decoder / plain actor width
  std::size_t heads = 2;
  std::size_t d_k = 64;
  std::size_t critic_hidden = 128;
};

// Feature scaling applied before any network sees an observation.
inline constexpr double kPositionScale = 50.0;
inline constexpr double kVelocityScale = 10.0;

/// rows x kNumFeatures, scaled.
nn::Tensor observation_tensor(const sim::Observation& obs);

struct ActorOutput {
  nn::Var logits;                               // B x kNumActions
  std::optional<nn::AttentionResult> attention;  // attention actors only
};

/// Plain MLP actor over the flattened observation, or encoder/attention/decoder.
struct Actor {
  bool attention = true;
  NetShape shape;
  nn::Mlp encoder;          // shared over vehicle rows
  nn::AttentionParams attn;
  nn::Mlp decoder;          // context concatenated with the ego encoding
  nn::Mlp mlp;              // plain actor

  Actor() = default;
  Actor(const std::string& name, bool attention, const NetShape& shape, Rng& rng);

  ActorOutput forward(nn::Tape& tape, std::span<const sim::Observation* const> batch);
  ActorOutput forward(nn::Tape& tape, std::span<const sim::Observation* const> batch) const;

  void collect(std::vector<nn::Parameter*>& out);
  void collect(std::vector<const nn::Parameter*>& out) const;
};

/// Centralized Q over all agents' observations and one-hot actions.
struct Critic {
  NetShape shape;
  nn::Mlp mlp;

  Critic() = default;
  Critic(const std::string& name, const NetShape& shape, Rng& rng);

  std::size_t obs_width() const { return shape.obs_rows * sim::kNumFeatures; }
  std::size_t input_width() const { return sim::kNumAgents * (obs_width() + sim::kNumActions); }

  nn::Var forward(nn::Tape& tape, const nn::Var& input);
  nn::Var forward(nn::Tape& tape, const nn::Var& input) const;

  void collect(std::vector<nn::Parameter*>& out);
  void collect(std::vector<const nn::Parameter*>& out) const;
};

/// Behaviour and target networks with their optimizers for one agent.
/// Not movable: the optimizers hold parameter addresses.
struct AgentNets {
  Actor actor, target_actor;
  Critic critic, target_critic;
  nn::Adam actor_opt, critic_opt;

  AgentNets(int agent, bool attention, const NetShape& shape, const nn::AdamConfig& adam, Rng& rng);
  AgentNets(const AgentNets&) = delete;
  AgentNets& operator=(const AgentNets&) = delete;
};

/// Copies values of `src` into `dst` (same architecture).
void copy_params(std::span<const nn::Parameter* const> src, std::span<nn::Parameter* const> dst);

/// dst <- tau * src + (1 - tau) * dst, elementwise.
void soft_update(std::span<const nn::Parameter* const> src, std::span<nn::Parameter* const> dst, double tau);

std::vector<nn::Parameter*> params_of(Actor& a);
std::vector<const nn::Parameter*> params_of(const Actor& a);
std::vector<nn::Parameter*> params_of(Critic& c);
std::vector<const nn::Parameter*> params_of(const Critic& c);

}  // namespace cavmarl::marl
