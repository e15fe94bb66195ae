#include "cavmarl/marl/evaluate.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "cavmarl/marl/trainer.hpp"

namespace cavmarl::marl {

EvalResult evaluate(const sim::ScenarioConfig& scenario, std::span<const Actor* const> actors,
                    const PolicyConfig& policy, const EvalConfig& cfg) {
  if (cfg.episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
  if (cfg.workers < 1) throw std::invalid_argument("workers must be at least 1");
  const sim::IntersectionEnv env(scenario);
  const auto n = static_cast<std::size_t>(cfg.episodes);
  std::vector<EpisodeRun> runs(n);

  auto play = [&](std::size_t k) {
    const int ep = static_cast<int>(k);
    Rng rng(episode_seed(cfg.seed, "eval-policy", ep));  // unused when greedy
    EpisodeOptions eo;
    eo.record_trace = cfg.record_traces;
    eo.episode_index = ep;
    runs[k] = run_episode(env, episode_seed(cfg.seed, "eval", ep), actors, policy, ExploreParams{false, 0.0, 1.0},
                          rng, eo);
  };
  const std::size_t w = std::min(n, static_cast<std::size_t>(cfg.workers));
  if (w == 1) {
    for (std::size_t k = 0; k < n; ++k) play(k);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(w);
    for (std::size_t t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t k = t; k < n; k += w) play(k);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EvalResult res;
  int successes = 0;
  double pet_sum = 0.0;
  for (EpisodeRun& r : runs) {
    res.summaries.push_back(r.summary);
    successes += r.summary.outcome == eval::Outcome::Success ? 1 : 0;
    res.collisions += r.summary.collisions;
    if (r.trace) {
      for (const auto& s : eval::compute_pet(*r.trace).samples) {
        pet_sum += s.pet;
        ++res.pet_samples;
      }
      res.traces.push_back(std::move(*r.trace));
    }
  }
  res.success_rate = static_cast<double>(successes) / static_cast<double>(n);
  res.mean_pet = res.pet_samples ? pet_sum / static_cast<double>(res.pet_samples)
                                 : std::numeric_limits<double>::quiet_NaN();
  return res;
}

}  // namespace cavmarl::marl
