#include "cavmarl/marl/maddpg.hpp"

#include <stdexcept>

namespace cavmarl::marl {

using nn::Tape;
using nn::Tensor;
using nn::Var;

ActDecision actor_forward(const Actor& actor, const sim::Observation& obs, const ExploreParams& ex, Rng& rng) {
  Tape tape;
  const sim::Observation* one[] = {&obs};
  ActorOutput out = actor.forward(tape, one);
  ActDecision d;
  d.logits = out.logits.value();
  constexpr auto n = static_cast<std::size_t>(sim::kNumActions);
  int action;
  if (ex.explore) {
    const double u = uniform01(rng);
    nn::GumbelSample g = nn::gumbel_softmax_sample(out.logits, ex.temperature, rng);
    d.relaxed = g.soft.value();
    action = g.argmax[0];
    if (u < ex.epsilon) action = static_cast<int>(uniform_index(rng, n));
  } else {
    action = nn::argmax_rows(d.logits)[0];
    d.relaxed = Tensor({1, n}, 0.0);
    d.relaxed[static_cast<std::size_t>(action)] = 1.0;
  }
  d.action = static_cast<sim::MetaAction>(action);
  if (out.attention) {
    d.has_attention = true;
    const Tensor& w = out.attention->combined;
    d.row_weights.assign(w.data(), w.data() + w.size());
    for (int r = 1; r < obs.rows; ++r) {
      const auto rr = static_cast<std::size_t>(r);
      if (!obs.mask[rr]) continue;
      d.ids.push_back(obs.vehicle_ids[rr]);
      d.weights.push_back(w[rr]);
      d.distances.push_back(obs.distances[rr]);
    }
  }
  return d;
}

Tensor joint_observations(Batch batch, bool next) {
  if (batch.empty()) throw std::invalid_argument("joint_observations: empty batch");
  const auto rows = static_cast<std::size_t>(batch[0]->x[0].rows);
  const std::size_t w = rows * sim::kNumFeatures;
  const std::size_t width = w * sim::kNumAgents;
  Tensor out({batch.size(), width}, 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& obs = next ? batch[b]->x_next : batch[b]->x;
    for (std::size_t j = 0; j < static_cast<std::size_t>(sim::kNumAgents); ++j) {
      const Tensor t = observation_tensor(obs[j]);
      if (t.size() != w) throw nn::ShapeError("joint_observations: inconsistent observation rows");
      std::copy(t.data(), t.data() + w, out.data() + b * width + j * w);
    }
  }
  return out;
}

Tensor action_onehots(Batch batch, int agent) {
  Tensor out({batch.size(), static_cast<std::size_t>(sim::kNumActions)}, 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    out(b, static_cast<std::size_t>(batch[b]->a[static_cast<std::size_t>(agent)])) = 1.0;
  }
  return out;
}

namespace {

std::vector<const sim::Observation*> agent_obs(Batch batch, int agent, bool next) {
  std::vector<const sim::Observation*> out;
  out.reserve(batch.size());
  for (const Transition* t : batch) out.push_back(&(next ? t->x_next : t->x)[static_cast<std::size_t>(agent)]);
  return out;
}

}  // namespace

Tensor greedy_onehots(const Actor& actor, Batch batch, int agent, bool next) {
  Tape tape;
  const auto obs = agent_obs(batch, agent, next);
  const Tensor logits = actor.forward(tape, obs).logits.value();
  Tensor out({batch.size(), static_cast<std::size_t>(sim::kNumActions)}, 0.0);
  const auto am = nn::argmax_rows(logits);
  for (std::size_t b = 0; b < am.size(); ++b) out(b, static_cast<std::size_t>(am[b])) = 1.0;
  return out;
}

void LearnerConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (batch == 0) throw std::invalid_argument("batch size must be positive");
}

double critic_update(AgentNets& nets, int agent, Batch batch, std::span<const Actor* const> target_actors,
                     double gamma) {
  if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
  if (target_actors.size() != static_cast<std::size_t>(sim::kNumAgents)) {
    throw std::invalid_argument("critic_update: need one target actor per agent");
  }
  const auto i = static_cast<std::size_t>(agent);
  const std::size_t B = batch.size();

  // Bootstrapped targets, computed without gradients.
  Tensor y({B, 1}, 0.0);
  {
    Tape tape;
    std::vector<Var> parts{tape.constant(joint_observations(batch, true))};
    for (int j = 0; j < sim::kNumAgents; ++j) {
      parts.push_back(tape.constant(greedy_onehots(*target_actors[static_cast<std::size_t>(j)], batch, j, true)));
    }
    const AgentNets& frozen = nets;
    const Tensor q_next = frozen.target_critic.forward(tape, nn::concat_cols(parts)).value();
    for (std::size_t b = 0; b < B; ++b) {
      const double bootstrap = batch[b]->done[i] ? 0.0 : gamma * q_next[b];
      y[b] = batch[b]->r[i] + bootstrap;
    }
  }

  Tape tape;
  std::vector<Var> parts{tape.constant(joint_observations(batch, false))};
  for (int j = 0; j < sim::kNumAgents; ++j) parts.push_back(tape.constant(action_onehots(batch, j)));
  Var q = nets.critic.forward(tape, nn::concat_cols(parts));
  Var loss = nn::mean(nn::square(nn::sub(q, tape.constant(std::move(y)))));
  nets.critic_opt.zero_grad();
  tape.backward(loss);
  nets.critic_opt.step();
  return loss.value().item();
}

Var actor_objective(Tape& tape, Actor& actor, const Critic& critic, int agent, Batch batch, const Tensor& noise,
                    double temperature, bool straight_through) {
  const auto obs = agent_obs(batch, agent, false);
  ActorOutput out = actor.forward(tape, obs);
  nn::GumbelSample g = nn::gumbel_softmax_with_noise(out.logits, noise, temperature);
  std::vector<Var> parts{tape.constant(joint_observations(batch, false))};
  for (int j = 0; j < sim::kNumAgents; ++j) {
    if (j == agent) {
      parts.push_back(straight_through ? g.hard : g.soft);
    } else {
      parts.push_back(tape.constant(action_onehots(batch, j)));
    }
  }
  return nn::mean(critic.forward(tape, nn::concat_cols(parts)));
}

double actor_update(AgentNets& nets, int agent, Batch batch, double temperature, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("actor_update: empty batch");
  Tensor noise({batch.size(), static_cast<std::size_t>(sim::kNumActions)}, 0.0);
  for (double& g : noise.values()) g = gumbel(rng);
  Tape tape;
  const Critic& critic = nets.critic;
  Var objective = actor_objective(tape, nets.actor, critic, agent, batch, noise, temperature, true);
  nets.actor_opt.zero_grad();
  tape.backward(nn::scale(objective, -1.0));
  nets.actor_opt.step();
  return objective.value().item();
}

Learner::Learner(Variant variant, LearnerConfig cfg, std::uint64_t init_seed) : variant_(variant), cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  for (int i = 0; i < sim::kNumAgents; ++i) {
    nets_.push_back(std::make_unique<AgentNets>(i, uses_attention(variant), cfg_.shape, cfg_.adam, rng));
  }
}

std::vector<const Actor*> Learner::actors() const {
  std::vector<const Actor*> out;
  for (const auto& n : nets_) out.push_back(&n->actor);
  return out;
}

std::vector<const Actor*> Learner::target_actors() const {
  std::vector<const Actor*> out;
  for (const auto& n : nets_) out.push_back(&n->target_actor);
  return out;
}

UpdateStats Learner::update(Batch batch, double temperature, Rng& rng) {
  UpdateStats st;
  const auto targets = target_actors();
  for (int i = 0; i < sim::kNumAgents; ++i) {
    const auto k = static_cast<std::size_t>(i);
    st.critic_loss[k] = critic_update(agent(i), i, batch, targets, cfg_.gamma);
    st.actor_objective[k] = actor_update(agent(i), i, batch, temperature, rng);
  }
  soft_update_targets();
  return st;
}

void Learner::soft_update_targets() {
  for (auto& n : nets_) {
    const Actor& a = n->actor;
    const Critic& c = n->critic;
    soft_update(params_of(a), params_of(n->target_actor), cfg_.tau);
    soft_update(params_of(c), params_of(n->target_critic), cfg_.tau);
  }
}

namespace {

struct NamedSet {
  std::string prefix;
  std::vector<nn::Parameter*> params;
};

std::vector<NamedSet> all_sets(const std::vector<std::unique_ptr<AgentNets>>& nets) {
  std::vector<NamedSet> sets;
  for (auto& n : nets) {
    sets.push_back({"", params_of(n->actor)});
    sets.push_back({"target/", params_of(n->target_actor)});
    sets.push_back({"", params_of(n->critic)});
    sets.push_back({"target/", params_of(n->target_critic)});
  }
  return sets;
}

}  // namespace

nn::Checkpoint Learner::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.metadata["variant"] = std::string(to_string(variant_));
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& set : all_sets(nets_)) {
    for (const nn::Parameter* p : set.params) ck.add(set.prefix + p->name(), p->value());
  }
  for (const auto& n : nets_) {
    for (const nn::Adam* opt : {&n->actor_opt, &n->critic_opt}) {
      const auto& ps = opt->params();
      for (std::size_t k = 0; k < ps.size(); ++k) {
        ck.add("adam.m/" + ps[k]->name(), opt->first_moments()[k]);
        ck.add("adam.v/" + ps[k]->name(), opt->second_moments()[k]);
      }
      steps.push_back(opt->steps());
    }
  }
  ck.metadata["adam_steps"] = steps;
  return ck;
}

void Learner::load_checkpoint(const nn::Checkpoint& ck) {
  const std::string v = ck.metadata.value("variant", std::string());
  if (v != to_string(variant_)) {
    throw nn::CheckpointError("checkpoint variant '" + v + "' does not match '" + std::string(to_string(variant_)) +
                              "'");
  }
  auto load_into = [&ck](nn::Tensor& dst, const std::string& name) {
    const nn::Tensor& src = ck.get(name);
    if (src.shape() != dst.shape()) {
      throw nn::CheckpointError("checkpoint tensor " + name + " has shape " + nn::shape_string(src.shape()) +
                                ", expected " + nn::shape_string(dst.shape()));
    }
    dst = src;
  };
  for (const auto& set : all_sets(nets_)) {
    for (nn::Parameter* p : set.params) load_into(p->value(), set.prefix + p->name());
  }
  const auto& steps = ck.metadata.at("adam_steps");
  std::size_t s = 0;
  for (auto& n : nets_) {
    for (nn::Adam* opt : {&n->actor_opt, &n->critic_opt}) {
      const auto& ps = opt->params();
      for (std::size_t k = 0; k < ps.size(); ++k) {
        load_into(opt->first_moments()[k], "adam.m/" + ps[k]->name());
        load_into(opt->second_moments()[k], "adam.v/" + ps[k]->name());
      }
      opt->set_steps(steps.at(s++).get<long long>());
    }
  }
}

}  // namespace cavmarl::marl
