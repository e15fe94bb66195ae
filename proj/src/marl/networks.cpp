#include "cavmarl/marl/networks.hpp"

#include <stdexcept>

namespace cavmarl::marl {

using nn::Tensor;
using nn::Var;

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Maddpg: return "maddpg";
    case Variant::AttentionMaddpg: return "attention_maddpg";
    case Variant::MaGaDdpg: return "ma_ga_ddpg";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view s) {
  for (auto v : {Variant::Maddpg, Variant::AttentionMaddpg, Variant::MaGaDdpg}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

Tensor observation_tensor(const sim::Observation& obs) {
  Tensor t({static_cast<std::size_t>(obs.rows), static_cast<std::size_t>(sim::kNumFeatures)}, 0.0);
  for (int r = 0; r < obs.rows; ++r) {
    if (!obs.mask[static_cast<std::size_t>(r)]) continue;
    const auto rr = static_cast<std::size_t>(r);
    t(rr, 0) = obs.at(r, 0) / kPositionScale;
    t(rr, 1) = obs.at(r, 1) / kPositionScale;
    t(rr, 2) = obs.at(r, 2) / kVelocityScale;
    t(rr, 3) = obs.at(r, 3) / kVelocityScale;
    t(rr, 4) = obs.at(r, 4);
    t(rr, 5) = obs.at(r, 5);
  }
  return t;
}

namespace {

template <typename A>
ActorOutput actor_forward_impl(A& actor, nn::Tape& tape, std::span<const sim::Observation* const> batch) {
  const std::size_t rows = actor.shape.obs_rows;
  const std::size_t B = batch.size();
  if (B == 0) throw std::invalid_argument("Actor: empty batch");
  for (const sim::Observation* o : batch) {
    if (static_cast<std::size_t>(o->rows) != rows) {
      throw nn::ShapeError("Actor: observation has " + std::to_string(o->rows) + " rows, expected " +
                           std::to_string(rows));
    }
  }
  ActorOutput out;
  if (!actor.attention) {
    const std::size_t w = rows * sim::kNumFeatures;
    Tensor x({B, w}, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const Tensor t = observation_tensor(*batch[b]);
      std::copy(t.data(), t.data() + w, x.data() + b * w);
    }
    out.logits = actor.mlp.forward(tape, tape.constant(std::move(x)));
    return out;
  }
  Tensor x({B * rows, static_cast<std::size_t>(sim::kNumFeatures)}, 0.0);
  std::vector<std::uint8_t> mask(B * rows, 0);
  std::vector<std::size_t> ego(B);
  for (std::size_t b = 0; b < B; ++b) {
    const Tensor t = observation_tensor(*batch[b]);
    std::copy(t.data(), t.data() + t.size(), x.data() + b * t.size());
    std::copy(batch[b]->mask.begin(), batch[b]->mask.end(), mask.begin() + static_cast<std::ptrdiff_t>(b * rows));
    ego[b] = b * rows;
  }
  Var enc = actor.encoder.forward(tape, tape.constant(std::move(x)));
  Var query = nn::select_rows(enc, ego);
  nn::AttentionResult att = nn::multi_head_attention(tape, actor.attn, query, enc, mask, rows);
  const Var parts[] = {att.context, query};
  out.logits = actor.decoder.forward(tape, nn::concat_cols(parts));
  out.attention = std::move(att);
  return out;
}

}  // namespace

Actor::Actor(const std::string& name, bool use_attention, const NetShape& s, Rng& rng)
    : attention(use_attention), shape(s) {
  const std::size_t f = sim::kNumFeatures;
  if (attention) {
    encoder = nn::Mlp(name + ".encoder", {f, s.hidden, s.hidden}, rng);
    attn = nn::AttentionParams(name + ".attention", s.heads, s.hidden, s.d_k, s.d_k, s.hidden, rng);
    decoder = nn::Mlp(name + ".decoder", {2 * s.hidden, s.hidden, static_cast<std::size_t>(sim::kNumActions)}, rng);
  } else {
    mlp = nn::Mlp(name + ".mlp", {s.obs_rows * f, s.hidden, s.hidden, static_cast<std::size_t>(sim::kNumActions)},
                  rng);
  }
}

ActorOutput Actor::forward(nn::Tape& tape, std::span<const sim::Observation* const> batch) {
  return actor_forward_impl(*this, tape, batch);
}

ActorOutput Actor::forward(nn::Tape& tape, std::span<const sim::Observation* const> batch) const {
  return actor_forward_impl(*this, tape, batch);
}

void Actor::collect(std::vector<nn::Parameter*>& out) {
  if (attention) {
    encoder.collect(out);
    attn.collect(out);
    decoder.collect(out);
  } else {
    mlp.collect(out);
  }
}

void Actor::collect(std::vector<const nn::Parameter*>& out) const {
  if (attention) {
    encoder.collect(out);
    attn.collect(out);
    decoder.collect(out);
  } else {
    mlp.collect(out);
  }
}

Critic::Critic(const std::string& name, const NetShape& s, Rng& rng) : shape(s) {
  mlp = nn::Mlp(name + ".mlp", {input_width(), s.critic_hidden, s.critic_hidden, 1}, rng);
}

Var Critic::forward(nn::Tape& tape, const Var& input) { return mlp.forward(tape, input); }
Var Critic::forward(nn::Tape& tape, const Var& input) const { return mlp.forward(tape, input); }

void Critic::collect(std::vector<nn::Parameter*>& out) { mlp.collect(out); }
void Critic::collect(std::vector<const nn::Parameter*>& out) const { mlp.collect(out); }

std::vector<nn::Parameter*> params_of(Actor& a) {
  std::vector<nn::Parameter*> v;
  a.collect(v);
  return v;
}
std::vector<const nn::Parameter*> params_of(const Actor& a) {
  std::vector<const nn::Parameter*> v;
  a.collect(v);
  return v;
}
std::vector<nn::Parameter*> params_of(Critic& c) {
  std::vector<nn::Parameter*> v;
  c.collect(v);
  return v;
}
std::vector<const nn::Parameter*> params_of(const Critic& c) {
  std::vector<const nn::Parameter*> v;
  c.collect(v);
  return v;
}

AgentNets::AgentNets(int agent, bool use_attention, const NetShape& shape, const nn::AdamConfig& adam, Rng& rng)
    : actor("agent" + std::to_string(agent) + ".actor", use_attention, shape, rng),
      target_actor(actor),
      critic("agent" + std::to_string(agent) + ".critic", shape, rng),
      target_critic(critic) {
  actor_opt = nn::Adam(params_of(actor), adam);
  critic_opt = nn::Adam(params_of(critic), adam);
}

void copy_params(std::span<const nn::Parameter* const> src, std::span<nn::Parameter* const> dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("copy_params: parameter count mismatch");
  for (std::size_t k = 0; k < src.size(); ++k) {
    if (src[k]->value().shape() != dst[k]->value().shape()) {
      throw std::invalid_argument("copy_params: shape mismatch for " + src[k]->name());
    }
    dst[k]->value() = src[k]->value();
  }
}

void soft_update(std::span<const nn::Parameter* const> src, std::span<nn::Parameter* const> dst, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in (0, 1]");
  if (src.size() != dst.size()) throw std::invalid_argument("soft_update: parameter count mismatch");
  for (std::size_t k = 0; k < src.size(); ++k) {
    const nn::Tensor& s = src[k]->value();
    nn::Tensor& d = dst[k]->value();
    if (s.shape() != d.shape()) throw std::invalid_argument("soft_update: shape mismatch for " + src[k]->name());
    for (std::size_t i = 0; i < s.size(); ++i) d[i] = tau * s[i] + (1.0 - tau) * d[i];
  }
}

}  // namespace cavmarl::marl
