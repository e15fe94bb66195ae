#include "cavmarl/marl/policy.hpp"

#include <algorithm>
#include <sstream>

namespace cavmarl::marl {

using sim::MetaAction;

double EpisodeSummary::mean_reward() const {
  double s = 0.0;
  for (double r : rewards) s += r;
  return s / sim::kNumAgents;
}

std::pair<std::vector<prior::InteractionSet>, prior::LevelRank> compute_priors(
    const sim::WorldState& world, std::span<const ActDecision> acts, const prior::PriorConfig& cfg) {
  std::vector<prior::InteractionSet> sets(sim::kNumAgents);
  std::vector<int> cavs;
  for (int i = 0; i < sim::kNumAgents; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (world.done[k]) continue;
    cavs.push_back(i);
    const ActDecision& a = acts[k];
    if (a.has_attention) sets[k] = prior::select_interaction_objects(a.ids, a.weights, a.distances, cfg);
  }
  return {sets, prior::rank_levels(prior::global_attention(sets, cavs))};
}

JointDecision decide(const sim::IntersectionEnv& env, const sim::WorldState& world,
                     std::span<const sim::Observation> obs, std::span<const Actor* const> actors,
                     const PolicyConfig& cfg, const ExploreParams& ex, Rng& rng) {
  JointDecision d;
  d.acts.resize(sim::kNumAgents);
  d.proposed.fill(MetaAction::Idle);
  for (int i = 0; i < sim::kNumAgents; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (world.done[k]) continue;
    d.acts[k] = actor_forward(*actors[k], obs[k], ex, rng);
    d.proposed[k] = d.acts[k].action;
  }
  d.executed = d.proposed;
  if (cfg.inspector_active()) {
    auto [sets, rank] = compute_priors(world, d.acts, cfg.prior);
    d.sets = std::move(sets);
    d.correction = safety::correct_actions(env, world, d.proposed, rank, cfg.safety);
    for (std::size_t k = 0; k < d.executed.size(); ++k) d.executed[k] = d.correction->actions[k];
    d.rank = std::move(rank);
  }
  return d;
}

namespace {

eval::DecisionRecord decision_record(int step, const JointDecision& d, const sim::StepResult& r) {
  eval::DecisionRecord rec;
  rec.step = step;
  for (int i = 0; i < sim::kNumAgents; ++i) {
    const auto k = static_cast<std::size_t>(i);
    rec.proposed.push_back(static_cast<int>(d.proposed[k]));
    rec.executed.push_back(static_cast<int>(d.executed[k]));
  }
  const bool attention = std::any_of(d.acts.begin(), d.acts.end(), [](const ActDecision& a) { return a.has_attention; });
  if (attention) {
    for (const ActDecision& a : d.acts) rec.attention.push_back({a.ids, a.weights});
  }
  rec.rewards = r.rewards;
  rec.dones = r.dones;
  if (d.rank) rec.rank = d.rank->order;
  if (d.correction) {
    for (const auto& c : d.correction->records) {
      rec.corrections.push_back({c.agent, static_cast<int>(c.proposed), static_cast<int>(c.corrected),
                                 std::vector<int>(c.sed.begin(), c.sed.end()), c.ci_before, c.ci_after});
    }
  }
  rec.collisions = r.events.collisions;
  rec.arrivals = r.events.arrivals;
  return rec;
}

}  // namespace

EpisodeRun run_episode(const sim::IntersectionEnv& env, std::uint64_t episode_seed,
                       std::span<const Actor* const> actors, const PolicyConfig& cfg, const ExploreParams& ex,
                       Rng& rng, const EpisodeOptions& opt) {
  if (actors.size() != static_cast<std::size_t>(sim::kNumAgents)) {
    throw std::invalid_argument("run_episode: need one actor per agent");
  }
  EpisodeRun run;
  sim::WorldState world = env.spawn_seeded(episode_seed);
  const double dt = env.config().sim_dt;
  if (opt.record_trace) {
    eval::EpisodeTrace t;
    t.episode = opt.episode_index;
    t.seed = episode_seed;
    t.variant = std::string(to_string(cfg.variant));
    t.inspector = cfg.inspector_active();
    t.scenario = eval::scenario_to_json(env.config());
    for (int i = 0; i < sim::kNumAgents; ++i) t.cav_ids.push_back(i);
    t.substeps.push_back(eval::snapshot(world, dt));
    run.trace = std::move(t);
  }
  sim::SubstepObserver observer;
  if (opt.record_trace) {
    observer = [&run, dt](const sim::WorldState& w) { run.trace->substeps.push_back(eval::snapshot(w, dt)); };
  }

  std::vector<sim::Observation> obs = env.observe_all(world);
  EpisodeSummary& sum = run.summary;
  while (true) {
    const JointDecision d = decide(env, world, obs, actors, cfg, ex, rng);
    const int step = world.time_step;
    sim::StepResult r = env.step(world, d.executed, observer);
    for (int i = 0; i < sim::kNumAgents; ++i) {
      const auto k = static_cast<std::size_t>(i);
      sum.rewards[k] += r.rewards[k];
      sum.collisions += r.events.agents[k].collided ? 1 : 0;
      sum.arrivals += r.events.agents[k].arrived ? 1 : 0;
    }
    ++sum.steps;
    if (opt.record_trace) run.trace->decisions.push_back(decision_record(step, d, r));
    if (opt.keep_transitions) {
      Transition t;
      t.x = obs;
      for (int i = 0; i < sim::kNumAgents; ++i) {
        const auto k = static_cast<std::size_t>(i);
        t.a[k] = static_cast<int>(d.executed[k]);
        t.r[k] = r.rewards[k];
        t.done[k] = r.dones[k];
      }
      t.x_next = r.observations;
      run.transitions.push_back(std::move(t));
    }
    obs = std::move(r.observations);
    if (r.episode_done) break;
  }
  sum.outcome = eval::classify(world);
  if (run.trace) run.trace->outcome = sum.outcome;
  return run;
}

namespace {

std::string join_actions(const std::vector<int>& a) {
  std::string s;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (k) s += ' ';
    s += sim::to_string(static_cast<MetaAction>(a[k]));
  }
  return s;
}

}  // namespace

std::optional<std::string> replay_trace(const eval::EpisodeTrace& trace, std::vector<std::string>* narration) {
  const sim::ScenarioConfig cfg = eval::scenario_from_json(trace.scenario);
  const sim::IntersectionEnv env(cfg);
  sim::WorldState world = env.spawn_seeded(trace.seed);
  std::vector<eval::SubstepRecord> produced{eval::snapshot(world, cfg.sim_dt)};
  const sim::SubstepObserver observer = [&produced, &cfg](const sim::WorldState& w) {
    produced.push_back(eval::snapshot(w, cfg.sim_dt));
  };
  for (const eval::DecisionRecord& d : trace.decisions) {
    if (d.executed.size() != static_cast<std::size_t>(sim::kNumAgents)) {
      return "decision " + std::to_string(d.step) + ": wrong number of actions";
    }
    std::array<MetaAction, sim::kNumAgents> actions{};
    for (std::size_t k = 0; k < actions.size(); ++k) actions[k] = static_cast<MetaAction>(d.executed[k]);
    const sim::StepResult r = env.step(world, actions, observer);
    if (r.rewards != d.rewards) return "decision " + std::to_string(d.step) + ": rewards differ";
    if (r.dones != d.dones) return "decision " + std::to_string(d.step) + ": done flags differ";
    if (r.events.collisions != d.collisions) return "decision " + std::to_string(d.step) + ": collisions differ";
    if (r.events.arrivals != d.arrivals) return "decision " + std::to_string(d.step) + ": arrivals differ";
    if (narration) {
      std::ostringstream line;
      line.precision(17);
      line << "step " << d.step << ": actions [" << join_actions(d.executed) << "] rewards [";
      for (std::size_t k = 0; k < r.rewards.size(); ++k) line << (k ? " " : "") << r.rewards[k];
      line << "]";
      for (const auto& [a, b] : r.events.collisions) line << " collision(" << a << "," << b << ")";
      for (int id : r.events.arrivals) line << " arrived(" << id << ")";
      narration->push_back(line.str());
    }
  }
  if (produced.size() != trace.substeps.size()) {
    return "sub-step count differs: trace has " + std::to_string(trace.substeps.size()) + ", re-simulation produced " +
           std::to_string(produced.size());
  }
  for (std::size_t k = 0; k < produced.size(); ++k) {
    if (!(produced[k] == trace.substeps[k])) return "sub-step " + std::to_string(k) + " differs";
  }
  if (eval::classify(world) != trace.outcome) return "outcome differs";
  return std::nullopt;
}

}  // namespace cavmarl::marl
