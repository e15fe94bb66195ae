#include "cavmarl/cli/run_cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cavmarl/cli/config.hpp"
#include "cavmarl/marl/evaluate.hpp"

#ifndef CAVMARL_VERSION
#define CAVMARL_VERSION "dev"
#endif

namespace cavmarl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const char* version_string() { return CAVMARL_VERSION; }

namespace {

// Flags shared by the config-driven subcommands.
struct CommonFlags {
  std::string config, variant, scenario, checkpoint, out;
  std::uint64_t seed = 0;
  int episodes = 0, workers = 0;
  std::vector<std::string> sets;
  CLI::Option *o_variant = nullptr, *o_scenario = nullptr, *o_seed = nullptr, *o_episodes = nullptr,
              *o_workers = nullptr, *o_out = nullptr, *o_checkpoint = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "flat key = value config file");
    o_variant = app->add_option("--variant", variant, "maddpg | attention_maddpg | ma_ga_ddpg");
    o_scenario = app->add_option("--scenario", scenario, "single_lane | single_lane_mixed | two_lane | three_lane");
    o_seed = app->add_option("--seed", seed, "root seed");
    o_episodes = app->add_option("--episodes", episodes, "episode count")->check(CLI::NonNegativeNumber);
    o_workers = app->add_option("--workers", workers, "parallel rollout workers (1 is deterministic)")
                    ->check(CLI::PositiveNumber);
    o_out = app->add_option("--out", out, "output directory");
    o_checkpoint = app->add_option("--checkpoint", checkpoint, "checkpoint file");
    app->add_option("--set", sets, "extra key=value override, repeatable");
  }

  std::map<std::string, std::string> file_values() const {
    std::map<std::string, std::string> m = config.empty() ? std::map<std::string, std::string>{} : read_config_file(config);
    for (const std::string& s : sets) {
      for (auto& [k, v] : parse_config_text(s, "--set")) m[k] = v;
    }
    return m;
  }

  // Episodes are left to the caller since evaluate reads them differently.
  Overrides overrides(bool with_episodes) const {
    Overrides ov;
    if (*o_variant) ov.variant = variant;
    if (*o_scenario) ov.scenario = scenario;
    if (*o_seed) ov.seed = seed;
    if (with_episodes && *o_episodes) ov.episodes = episodes;
    if (*o_workers) ov.workers = workers;
    if (*o_out) ov.out = out;
    return ov;
  }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw eval::TraceIoError("cannot write " + p.string());
  f << text;
  if (!f) throw eval::TraceIoError("write failed for " + p.string());
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

int cmd_train(const CommonFlags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f.file_values(), f.overrides(true));
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir / "config.resolved", run_config_to_text(cfg));
  marl::TrainOptions opt;
  opt.out_dir = cfg.out_dir;
  opt.version = version_string();
  if (!f.checkpoint.empty()) opt.resume = fs::path(f.checkpoint);
  const int every = std::max(1, cfg.train.episodes / 20);
  opt.on_episode = [&out, every](const marl::TrainLogRow& r) {
    if ((r.episode + 1) % every == 0) {
      out << "episode " << r.episode + 1 << " mean_reward " << r.mean_reward << " outcome "
          << eval::to_string(r.outcome) << "\n";
    }
  };
  const marl::TrainResult res = marl::train(cfg.train, cfg.scenario, cfg.policy, opt);
  out << "trained " << res.log.size() << " episodes (" << res.env_steps << " env steps); checkpoints in "
      << (cfg.out_dir / "checkpoints").string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const CommonFlags& f, std::ostream& out) {
  const nn::Checkpoint ck = nn::Checkpoint::load(f.checkpoint);
  const auto learner = marl::learner_from_checkpoint(ck);
  RunConfig base = run_config_from_checkpoint(ck);
  const RunConfig cfg = resolve_config(f.file_values(), f.overrides(false), base);
  if (cfg.policy.variant != learner->variant()) {
    throw ConfigError("--variant " + std::string(marl::to_string(cfg.policy.variant)) + " does not match checkpoint " +
                      std::string(marl::to_string(learner->variant())));
  }
  if (static_cast<std::size_t>(cfg.scenario.obs_rows) != learner->config().shape.obs_rows) {
    throw ConfigError("scenario obs_rows differs from the checkpoint network");
  }
  marl::EvalConfig ec;
  ec.episodes = *f.o_episodes ? f.episodes : cfg.eval_episodes;
  ec.seed = cfg.train.seed;
  ec.workers = cfg.train.workers;
  const fs::path dir = *f.o_out ? fs::path(f.out) : fs::path(f.checkpoint).parent_path() / "eval";
  fs::create_directories(dir);
  const marl::EvalResult res = marl::evaluate(cfg.scenario, learner->actors(), cfg.policy, ec);
  eval::export_traces(res.traces, dir);
  std::string summary = "metric,value\n";
  summary += "episodes," + std::to_string(ec.episodes) + "\n";
  summary += "success_rate," + fmt(res.success_rate) + "\n";
  summary += "collisions," + std::to_string(res.collisions) + "\n";
  summary += "mean_pet," + fmt(res.mean_pet) + "\n";
  summary += "pet_samples," + std::to_string(res.pet_samples) + "\n";
  write_file(dir / "summary.csv", summary);
  json manifest{{"version", version_string()},
                {"checkpoint", f.checkpoint},
                {"seed", ec.seed},
                {"episode_seed_stream", "eval/<episode>"},
                {"episodes", ec.episodes},
                {"config", run_config_to_json(cfg)}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  out << "success_rate " << fmt(res.success_rate) << " collisions " << res.collisions << " mean_pet "
      << (res.pet_samples ? fmt(res.mean_pet) : "n/a") << " (" << res.pet_samples << " samples); written to "
      << dir.string() << "\n";
  return kExitOk;
}

int cmd_replay(const std::string& trace_path, const std::string& narration_path, std::ostream& out,
               std::ostream& err) {
  const eval::EpisodeTrace trace = eval::read_trace(trace_path);
  std::vector<std::string> narration;
  const auto mismatch = marl::replay_trace(trace, &narration);
  for (const auto& line : narration) out << line << "\n";
  if (!narration_path.empty()) {
    std::string text;
    for (const auto& line : narration) text += json{{"narration", line}}.dump() + "\n";
    text += json{{"result", mismatch ? "mismatch" : "identical"}, {"detail", mismatch.value_or("")}}.dump() + "\n";
    write_file(narration_path, text);
  }
  if (mismatch) {
    err << "replay mismatch: " << *mismatch << "\n";
    out << "mismatch\n";
    return kExitMismatch;
  }
  out << "identical\n";
  return kExitOk;
}

int cmd_inspect(const CommonFlags& f, std::ostream& out) {
  std::optional<RunConfig> base;
  if (!f.checkpoint.empty()) base = run_config_from_checkpoint(nn::Checkpoint::load(f.checkpoint));
  out << run_config_to_text(resolve_config(f.file_values(), f.overrides(true), base));
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-agent intersection driving: training, evaluation and trace replay", "cavmarl"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  CommonFlags train_f, eval_f, inspect_f;
  CLI::App* train = app.add_subcommand("train", "train a variant and write logs and checkpoints");
  train_f.attach(train);
  CLI::App* evaluate = app.add_subcommand("evaluate", "greedy seeded evaluation of a checkpoint");
  eval_f.attach(evaluate);
  evaluate->get_option("--checkpoint")->required();
  std::string trace_path, narration_path;
  CLI::App* replay = app.add_subcommand("replay", "re-simulate a trace and check bit identity");
  replay->add_option("--trace", trace_path, "JSONL trace")->required();
  replay->add_option("--out", narration_path, "write the narration as JSONL");
  CLI::App* inspect = app.add_subcommand("inspect-config", "print the resolved configuration");
  inspect_f.attach(inspect);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    if (const CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
      err << sub->help();
    } else {
      err << app.help();
    }
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_f, out);
    if (*evaluate) return cmd_evaluate(eval_f, out);
    if (*replay) return cmd_replay(trace_path, narration_path, out, err);
    if (*inspect) return cmd_inspect(inspect_f, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nn::CheckpointIoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const eval::TraceIoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nn::CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const eval::TraceFormatError& e) {
    err << "trace error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace cavmarl::cli
