#include "cavmarl/marl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <thread>

namespace cavmarl::marl {

using nlohmann::json;

void TrainConfig::validate() const {
  if (episodes < 0) throw std::invalid_argument("episodes must be nonnegative");
  if (steps_per_update < 1) throw std::invalid_argument("steps_per_update must be at least 1");
  if (buffer < batch) throw std::invalid_argument("buffer must hold at least one batch");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(eps_start >= 0.0 && eps_start <= 1.0 && eps_end >= 0.0 && eps_end <= 1.0)) {
    throw std::invalid_argument("epsilon schedule must lie in [0, 1]");
  }
  if (!(temp_start > 0.0 && temp_end > 0.0)) throw std::invalid_argument("temperatures must be positive");
  if (anneal_episodes < 0) throw std::invalid_argument("anneal_episodes must be nonnegative");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be nonnegative");
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
  learner().validate();
}

LearnerConfig TrainConfig::learner() const {
  LearnerConfig l;
  l.gamma = gamma;
  l.tau = tau;
  l.batch = batch;
  l.adam.lr = lr;
  return l;
}

ExploreParams TrainConfig::explore_at(int episode) const {
  const int span = std::max(1, (anneal_episodes > 0 ? anneal_episodes : episodes) - 1);
  const double p = std::clamp(static_cast<double>(episode) / span, 0.0, 1.0);
  return {true, eps_start + p * (eps_end - eps_start), temp_start + p * (temp_end - temp_start)};
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"episodes", c.episodes},
              {"steps_per_update", c.steps_per_update},
              {"batch", c.batch},
              {"gamma", c.gamma},
              {"tau", c.tau},
              {"lr", c.lr},
              {"buffer", c.buffer},
              {"eps_start", c.eps_start},
              {"eps_end", c.eps_end},
              {"temp_start", c.temp_start},
              {"temp_end", c.temp_end},
              {"anneal_episodes", c.anneal_episodes},
              {"seed", c.seed},
              {"checkpoint_every", c.checkpoint_every},
              {"workers", c.workers}};
}

namespace {

template <typename T>
T number(const json& v, const std::string& key) {
  if (!v.is_number()) throw std::invalid_argument(key + ": expected a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) {
      const double d = v.get<double>();
      if (d != static_cast<double>(static_cast<long long>(d))) throw std::invalid_argument(key + ": expected an integer");
      if (d < 0 && std::is_unsigned_v<T>) throw std::invalid_argument(key + ": must be nonnegative");
      return static_cast<T>(d);
    }
    if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
      throw std::invalid_argument(key + ": must be nonnegative");
    }
  }
  return v.get<T>();
}

}  // namespace

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  for (const auto& [k, v] : j.items()) {
    if (k == "episodes") c.episodes = number<int>(v, k);
    else if (k == "steps_per_update") c.steps_per_update = number<int>(v, k);
    else if (k == "batch") c.batch = number<std::size_t>(v, k);
    else if (k == "gamma") c.gamma = number<double>(v, k);
    else if (k == "tau") c.tau = number<double>(v, k);
    else if (k == "lr") c.lr = number<double>(v, k);
    else if (k == "buffer") c.buffer = number<std::size_t>(v, k);
    else if (k == "eps_start") c.eps_start = number<double>(v, k);
    else if (k == "eps_end") c.eps_end = number<double>(v, k);
    else if (k == "temp_start") c.temp_start = number<double>(v, k);
    else if (k == "temp_end") c.temp_end = number<double>(v, k);
    else if (k == "anneal_episodes") c.anneal_episodes = number<int>(v, k);
    else if (k == "seed") c.seed = number<std::uint64_t>(v, k);
    else if (k == "checkpoint_every") c.checkpoint_every = number<int>(v, k);
    else if (k == "workers") c.workers = number<int>(v, k);
    else throw std::invalid_argument("training: unknown key '" + k + "'");
  }
  return c;
}

json policy_config_to_json(const PolicyConfig& c) {
  return json{{"variant", std::string(to_string(c.variant))},
              {"inspector", c.inspector},
              {"dis0", c.prior.dis0},
              {"delta0", c.prior.delta0},
              {"q_max", c.prior.q_max},
              {"predict_steps", c.safety.horizon},
              {"r_c", c.safety.r_c},
              {"hv_range", c.safety.hv_range}};
}

PolicyConfig policy_config_from_json(const json& j, PolicyConfig c) {
  for (const auto& [k, v] : j.items()) {
    if (k == "variant") {
      const auto parsed = v.is_string() ? parse_variant(v.get<std::string>()) : std::nullopt;
      if (!parsed) throw std::invalid_argument("variant: expected maddpg, attention_maddpg or ma_ga_ddpg");
      c.variant = *parsed;
    } else if (k == "inspector") {
      if (v.is_boolean()) {
        c.inspector = v.get<bool>();
      } else if (v.is_number_integer()) {
        c.inspector = v.get<int>() != 0;
      } else {
        throw std::invalid_argument("inspector: expected true or false");
      }
    } else if (k == "dis0") c.prior.dis0 = number<double>(v, k);
    else if (k == "delta0") c.prior.delta0 = number<double>(v, k);
    else if (k == "q_max") c.prior.q_max = number<int>(v, k);
    else if (k == "predict_steps") c.safety.horizon = number<int>(v, k);
    else if (k == "r_c") c.safety.r_c = number<double>(v, k);
    else if (k == "hv_range") c.safety.hv_range = number<double>(v, k);
    else throw std::invalid_argument("policy: unknown key '" + k + "'");
  }
  c.prior.validate();
  c.safety.validate();
  return c;
}

std::uint64_t episode_seed(std::uint64_t root, std::string_view stream, int k) {
  return derive_seed(root, std::string(stream) + "/" + std::to_string(k));
}

std::string format_log_row(const TrainLogRow& r) {
  char buf[64];
  std::string s = std::to_string(r.episode);
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    s += ',';
    s += buf;
  };
  for (double x : r.rewards) num(x);
  num(r.mean_reward);
  s += ',' + std::to_string(r.collisions) + ',' + std::to_string(r.arrivals) + ',' + std::to_string(r.steps) + ',' +
       std::string(eval::to_string(r.outcome));
  num(r.epsilon);
  num(r.temperature);
  s += ',' + std::to_string(r.updates);
  num(r.critic_loss);
  return s;
}

nn::Checkpoint make_checkpoint(const Learner& learner, int episodes_done, long long env_steps,
                               const TrainConfig& cfg, const sim::ScenarioConfig& scenario,
                               const PolicyConfig& policy, const std::string& version) {
  nn::Checkpoint ck = learner.to_checkpoint();
  ck.metadata["episodes_done"] = episodes_done;
  ck.metadata["env_steps"] = env_steps;
  ck.metadata["train"] = train_config_to_json(cfg);
  ck.metadata["scenario"] = eval::scenario_to_json(scenario);
  ck.metadata["policy"] = policy_config_to_json(policy);
  ck.metadata["version"] = version;
  return ck;
}

std::unique_ptr<Learner> learner_from_checkpoint(const nn::Checkpoint& ck) {
  try {
    const auto variant = parse_variant(ck.metadata.at("variant").get<std::string>());
    if (!variant) throw nn::CheckpointError("checkpoint names an unknown variant");
    const TrainConfig tc = train_config_from_json(ck.metadata.at("train"));
    const sim::ScenarioConfig sc = eval::scenario_from_json(ck.metadata.at("scenario"));
    LearnerConfig lc = tc.learner();
    lc.shape.obs_rows = static_cast<std::size_t>(sc.obs_rows);
    auto learner = std::make_unique<Learner>(*variant, lc, 0);
    learner->load_checkpoint(ck);
    return learner;
  } catch (const json::exception& e) {
    throw nn::CheckpointError(std::string("checkpoint metadata incomplete: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw nn::CheckpointError(std::string("checkpoint metadata invalid: ") + e.what());
  }
}

namespace {

// Independent copies of the behaviour actors for rollout workers.
std::vector<Actor> snapshot_actors(const Learner& learner) {
  std::vector<Actor> out;
  for (const Actor* a : learner.actors()) out.push_back(*a);
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw eval::TraceIoError("cannot open " + p.string() + " for writing");
  f << text;
  if (!f) throw eval::TraceIoError("write failed for " + p.string());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const sim::ScenarioConfig& scenario, const PolicyConfig& policy,
                  const TrainOptions& opt) {
  cfg.validate();
  scenario.validate();
  policy.prior.validate();
  policy.safety.validate();
  const sim::IntersectionEnv env(scenario);

  TrainResult res;
  int start_episode = 0;
  long long env_steps = 0;
  if (opt.resume) {
    const nn::Checkpoint ck = nn::Checkpoint::load(*opt.resume);
    res.learner = learner_from_checkpoint(ck);
    if (res.learner->variant() != policy.variant) {
      throw nn::CheckpointError("resume checkpoint was trained as " + std::string(to_string(res.learner->variant())));
    }
    start_episode = ck.metadata.value("episodes_done", 0);
    env_steps = ck.metadata.value("env_steps", 0LL);
  } else {
    LearnerConfig lc = cfg.learner();
    lc.shape.obs_rows = static_cast<std::size_t>(scenario.obs_rows);
    res.learner = std::make_unique<Learner>(policy.variant, lc, derive_seed(cfg.seed, "init"));
  }
  Learner& learner = *res.learner;

  // Streams continue deterministically after a resume.
  Rng buffer_rng(derive_seed(cfg.seed, "buffer/" + std::to_string(start_episode)));
  Rng update_rng(derive_seed(cfg.seed, "update/" + std::to_string(start_episode)));
  ReplayBuffer buffer(cfg.buffer);

  std::ofstream log_file, timing_file;
  std::filesystem::path ckpt_dir;
  if (opt.out_dir) {
    std::filesystem::create_directories(*opt.out_dir);
    ckpt_dir = *opt.out_dir / "checkpoints";
    std::filesystem::create_directories(ckpt_dir);
    json manifest{{"version", opt.version},
                  {"variant", std::string(to_string(policy.variant))},
                  {"seed", cfg.seed},
                  {"seeds",
                   {{"init", derive_seed(cfg.seed, "init")},
                    {"env_stream", "env/<episode>"},
                    {"explore_stream", "explore/<episode>"},
                    {"buffer", derive_seed(cfg.seed, "buffer/" + std::to_string(start_episode))},
                    {"update", derive_seed(cfg.seed, "update/" + std::to_string(start_episode))}}},
                  {"train", train_config_to_json(cfg)},
                  {"scenario", eval::scenario_to_json(scenario)},
                  {"policy", policy_config_to_json(policy)},
                  {"resumed_from", opt.resume ? opt.resume->string() : std::string()},
                  {"start_episode", start_episode}};
    write_text(*opt.out_dir / "manifest.json", manifest.dump(2) + "\n");
    const auto mode = start_episode > 0 ? std::ios::app : std::ios::trunc;
    log_file.open(*opt.out_dir / "train_log.csv", mode);
    timing_file.open(*opt.out_dir / "timing.csv", mode);
    if (!log_file || !timing_file) throw eval::TraceIoError("cannot open logs in " + opt.out_dir->string());
    if (start_episode == 0) {
      log_file << kTrainLogHeader << "\n";
      timing_file << "episode,wall_seconds\n";
    }
  }

  auto save_checkpoint = [&](int done) {
    if (!opt.out_dir) return;
    const nn::Checkpoint ck = make_checkpoint(learner, done, env_steps, cfg, scenario, policy, opt.version);
    const auto p = ckpt_dir / ("ep_" + std::to_string(done) + ".ckpt");
    ck.save(p);
    ck.save(ckpt_dir / "final.ckpt");
    res.checkpoints.push_back(p);
  };
  if (start_episode == 0) save_checkpoint(0);

  int updates = 0;
  double last_loss = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  int e = start_episode;
  while (e < cfg.episodes) {
    const int count = std::min(cfg.workers, cfg.episodes - e);
    std::vector<EpisodeRun> runs(static_cast<std::size_t>(count));
    auto play = [&](int k, std::span<const Actor* const> actors) {
      const int ep = e + k;
      Rng rng(episode_seed(cfg.seed, "explore", ep));
      EpisodeOptions eo;
      eo.keep_transitions = true;
      eo.episode_index = ep;
      runs[static_cast<std::size_t>(k)] =
          run_episode(env, episode_seed(cfg.seed, "env", ep), actors, policy, cfg.explore_at(ep), rng, eo);
    };
    if (count == 1) {
      const auto actors = learner.actors();
      play(0, actors);
    } else {
      const std::vector<Actor> snap = snapshot_actors(learner);
      std::vector<const Actor*> ptrs;
      for (const Actor& a : snap) ptrs.push_back(&a);
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
      for (int k = 0; k < count; ++k) {
        pool.emplace_back([&, k] {
          try {
            play(k, ptrs);
          } catch (...) {
            errors[static_cast<std::size_t>(k)] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
      }
    }

    for (int k = 0; k < count; ++k, ++e) {
      EpisodeRun& run = runs[static_cast<std::size_t>(k)];
      for (Transition& t : run.transitions) {
        buffer.push(std::move(t));
        ++env_steps;
        if (env_steps % cfg.steps_per_update != 0) continue;
        const auto batch = buffer.sample(cfg.batch, buffer_rng);
        if (!batch) continue;
        const UpdateStats st = learner.update(*batch, cfg.explore_at(e).temperature, update_rng);
        ++updates;
        last_loss = 0.0;
        for (double l : st.critic_loss) last_loss += l / sim::kNumAgents;
      }
      TrainLogRow row;
      row.episode = e;
      row.rewards = run.summary.rewards;
      row.mean_reward = run.summary.mean_reward();
      row.collisions = run.summary.collisions;
      row.arrivals = run.summary.arrivals;
      row.steps = run.summary.steps;
      row.outcome = run.summary.outcome;
      const ExploreParams ex = cfg.explore_at(e);
      row.epsilon = ex.epsilon;
      row.temperature = ex.temperature;
      row.updates = updates;
      row.critic_loss = last_loss;
      res.log.push_back(row);
      if (opt.out_dir) {
        log_file << format_log_row(row) << "\n";
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        timing_file << e << ',' << secs << "\n";
      }
      if (opt.on_episode) opt.on_episode(row);
      const int done = e + 1;
      if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done != cfg.episodes) save_checkpoint(done);
    }
  }
  if (cfg.episodes > start_episode) save_checkpoint(cfg.episodes);
  res.env_steps = env_steps;
  return res;
}

}  // namespace cavmarl::marl
