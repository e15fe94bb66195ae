#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <type_traits>

#include "cavmarl/marl/trainer.hpp"
#include "nn_oracles.hpp"

using namespace cavmarl;
using namespace cavmarl::marl;
namespace ct = cavmarl::testing;
namespace fs = std::filesystem;

namespace {

NetShape small_shape() {
  NetShape s;
  s.hidden = 16;
  s.d_k = 8;
  s.critic_hidden = 16;
  return s;
}

LearnerConfig small_learner(double lr = 0.01) {
  LearnerConfig c;
  c.shape = small_shape();
  c.adam.lr = lr;
  return c;
}

// Real transitions from uniformly random play.
std::vector<Transition> random_transitions(std::size_t want, std::uint64_t seed) {
  const sim::IntersectionEnv env{sim::ScenarioConfig{}};
  const Learner rnd(Variant::Maddpg, small_learner(), seed);
  const auto actors = rnd.actors();
  PolicyConfig pc;
  pc.variant = Variant::Maddpg;
  const ExploreParams ex{true, 1.0, 1.0};
  EpisodeOptions eo;
  eo.keep_transitions = true;
  std::vector<Transition> out;
  for (int ep = 0; out.size() < want; ++ep) {
    Rng rng(derive_seed(seed, "play/" + std::to_string(ep)));
    EpisodeRun run = run_episode(env, derive_seed(seed, "ep/" + std::to_string(ep)), actors, pc, ex, rng, eo);
    for (auto& t : run.transitions) {
      if (out.size() < want) out.push_back(std::move(t));
    }
  }
  return out;
}

std::vector<const Transition*> ptrs(const std::vector<Transition>& ts) {
  std::vector<const Transition*> p;
  for (const auto& t : ts) p.push_back(&t);
  return p;
}

Transition tagged(int k) {
  Transition t;
  t.r[0] = k;
  return t;
}

void zero_all(std::span<nn::Parameter* const> ps) {
  for (nn::Parameter* p : ps) p->value().fill(0.0);
}

std::vector<nn::Tensor> values_of(std::span<const nn::Parameter* const> ps) {
  std::vector<nn::Tensor> v;
  for (const nn::Parameter* p : ps) v.push_back(p->value());
  return v;
}

double max_change(std::span<const nn::Parameter* const> ps, const std::vector<nn::Tensor>& before) {
  double m = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k)
    for (std::size_t i = 0; i < before[k].size(); ++i) m = std::max(m, std::abs(ps[k]->value()[i] - before[k][i]));
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

TrainConfig tiny_train(int episodes) {
  TrainConfig c;
  c.episodes = episodes;
  c.steps_per_update = 10;
  c.batch = 16;
  c.buffer = 400;
  c.seed = 11;
  c.checkpoint_every = 0;
  return c;
}

}  // namespace

TEST_CASE("replay buffer: FIFO eviction and seeded sampling") {
  ReplayBuffer buf(5);
  Rng rng(1);
  CHECK_FALSE(buf.sample(1, rng).has_value());
  for (int k = 0; k < 6; ++k) buf.push(tagged(k));
  CHECK(buf.size() == 5);
  CHECK(buf.at(0).r[0] == 1.0);
  CHECK(buf.at(4).r[0] == 5.0);
  for (std::size_t i = 0; i < buf.size(); ++i) CHECK(buf.at(i).r[0] != 0.0);
  CHECK_THROWS_AS(buf.at(5), std::out_of_range);
  CHECK_FALSE(buf.sample_indices(6, rng).has_value());
  CHECK_THROWS(ReplayBuffer(0));

  Rng a(42), b(42);
  for (int k = 0; k < 10; ++k) CHECK(*buf.sample_indices(5, a) == *buf.sample_indices(5, b));
}

TEST_CASE("replay buffer: uniform index frequencies") {
  ReplayBuffer buf(10);
  for (int k = 0; k < 10; ++k) buf.push(tagged(k));
  Rng rng(derive_seed(3, "replay-freq"));
  std::array<int, 10> count{};
  const int n = 100000;
  for (int k = 0; k < n / 10; ++k) {
    const auto idx = buf.sample_indices(10, rng);
    for (std::size_t i : *idx) ++count[i];
  }
  for (int c : count) CHECK(std::abs(static_cast<double>(c) / n - 0.1) <= 0.01);
}

TEST_CASE("soft update closed forms") {
  nn::Parameter src("w", nn::Tensor({1}, 1.0));
  nn::Parameter dst("w", nn::Tensor({1}, 0.0));
  const nn::Parameter* s[] = {&src};
  nn::Parameter* d[] = {&dst};

  soft_update(s, d, 0.01);
  CHECK(dst.value()[0] == 0.01);

  dst.value()[0] = 0.3;
  soft_update(s, d, 0.01);
  soft_update(s, d, 0.01);
  CHECK(std::abs(dst.value()[0] - (1.0 - 0.99 * 0.99 * 0.7)) <= 1e-12);

  dst.value()[0] = -4.0;
  soft_update(s, d, 1.0);
  CHECK(dst.value()[0] == 1.0);

  CHECK_THROWS(soft_update(s, d, 0.0));
  CHECK_THROWS(soft_update(s, d, 1.5));
}

TEST_CASE("soft update: distance to a frozen source shrinks by (1 - tau)^k") {
  Rng rng(derive_seed(5, "soft"));
  for (int trial = 0; trial < 20; ++trial) {
    nn::Parameter src("w", ct::random_tensor({3, 4}, rng));
    nn::Parameter dst("w", ct::random_tensor({3, 4}, rng));
    const double tau = ct::random_tensor({1}, rng, 0.01, 0.5)[0];
    auto dist = [&] {
      double s = 0.0;
      for (std::size_t i = 0; i < src.value().size(); ++i) s += std::pow(src.value()[i] - dst.value()[i], 2);
      return std::sqrt(s);
    };
    const double d0 = dist();
    const nn::Parameter* s[] = {&src};
    nn::Parameter* d[] = {&dst};
    for (int k = 1; k <= 30; ++k) {
      soft_update(s, d, tau);
      const double want = std::pow(1.0 - tau, k) * d0;
      CHECK(std::abs(dist() - want) <= 1e-12 * std::max(1.0, d0));
    }
  }
}

TEST_CASE("learner targets mirror behaviour networks") {
  for (Variant v : {Variant::Maddpg, Variant::AttentionMaddpg, Variant::MaGaDdpg}) {
    const Learner l(v, small_learner(), 9);
    for (int i = 0; i < sim::kNumAgents; ++i) {
      const AgentNets& n = l.agent(i);
      const auto a = params_of(n.actor), ta = params_of(n.target_actor);
      const auto c = params_of(n.critic), tc = params_of(n.target_critic);
      REQUIRE(a.size() == ta.size());
      REQUIRE(c.size() == tc.size());
      for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k]->value() == ta[k]->value());
      for (std::size_t k = 0; k < c.size(); ++k) CHECK(c[k]->value() == tc[k]->value());
      CHECK(n.actor.attention == uses_attention(v));
    }
  }
  // The plain actor has no attention block at all.
  const Learner plain(Variant::Maddpg, small_learner(), 9);
  CHECK(plain.agent(0).actor.attn.wq.empty());
  CHECK(plain.agent(0).actor.encoder.layers.empty());
  const Learner att(Variant::AttentionMaddpg, small_learner(), 9);
  CHECK(att.agent(0).actor.attn.heads() == 2);
  CHECK(att.agent(0).actor.mlp.layers.empty());
}

TEST_CASE("actor_forward: greedy determinism, epsilon mixing, singleton attention") {
  static_assert(std::is_same_v<decltype(&actor_forward),
                               ActDecision (*)(const Actor&, const sim::Observation&, const ExploreParams&, Rng&)>,
                "execution reads only the agent's own actor and observation");
  const auto ts = random_transitions(8, 21);
  const Learner l(Variant::MaGaDdpg, small_learner(), 4);
  const Actor& actor = *l.actors()[0];
  const sim::Observation& obs = ts[5].x[0];

  Rng r1(1), r2(999);
  const ActDecision g1 = actor_forward(actor, obs, {}, r1);
  const ActDecision g2 = actor_forward(actor, obs, {}, r2);
  CHECK(g1.action == g2.action);
  CHECK(g1.logits == g2.logits);

  Rng rng(derive_seed(8, "eps"));
  std::array<int, sim::kNumActions> count{};
  const int n = 30000;
  for (int k = 0; k < n; ++k) ++count[static_cast<std::size_t>(actor_forward(actor, obs, {true, 1.0, 1.0}, rng).action)];
  for (int c : count) CHECK(std::abs(static_cast<double>(c) / n - 1.0 / 3.0) <= 0.02);

  sim::Observation alone = obs;
  for (int r = 1; r < alone.rows; ++r) {
    alone.mask[static_cast<std::size_t>(r)] = 0;
    alone.vehicle_ids[static_cast<std::size_t>(r)] = -1;
  }
  const ActDecision a = actor_forward(actor, alone, {}, r1);
  REQUIRE(a.has_attention);
  CHECK(a.ids.empty());
  CHECK(a.row_weights[0] == 1.0);
  for (std::size_t r = 1; r < a.row_weights.size(); ++r) CHECK(a.row_weights[r] == 0.0);
}

TEST_CASE("critic update at a fixed point leaves parameters unchanged") {
  const auto ts = random_transitions(16, 31);
  std::vector<Transition> batch = ts;
  for (auto& t : batch) t.r[1] = 0.7;
  Learner l(Variant::Maddpg, small_learner(), 2);
  AgentNets& n = l.agent(1);
  zero_all(params_of(n.critic));
  n.critic.mlp.layers.back().bias.value()[0] = 0.7;
  const auto before = values_of(params_of(std::as_const(n.critic)));
  const double loss = critic_update(n, 1, ptrs(batch), l.target_actors(), 0.0);
  CHECK(loss == 0.0);
  CHECK(max_change(params_of(std::as_const(n.critic)), before) <= 1e-8);
}

TEST_CASE("critic update: a repeated transition has the single-sample gradient") {
  const auto ts = random_transitions(4, 32);
  const std::vector<Transition> one{ts[3]};
  const std::vector<Transition> many(16, ts[3]);
  Learner a(Variant::AttentionMaddpg, small_learner(), 6), b(Variant::AttentionMaddpg, small_learner(), 6);
  critic_update(a.agent(2), 2, ptrs(one), a.target_actors(), 0.95);
  critic_update(b.agent(2), 2, ptrs(many), b.target_actors(), 0.95);
  const auto ga = params_of(a.agent(2).critic), gb = params_of(b.agent(2).critic);
  double worst = 0.0;
  for (std::size_t k = 0; k < ga.size(); ++k)
    for (std::size_t i = 0; i < ga[k]->grad().size(); ++i) {
      const double x = ga[k]->grad()[i], y = gb[k]->grad()[i];
      worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-12}));
    }
  CHECK(worst <= 1e-10);
}

TEST_CASE("critic loss falls on a frozen synthetic regression") {
  auto pool = random_transitions(256, 33);
  // Terminal transitions turn the TD target into a plain regression on r.
  for (auto& t : pool) {
    t.done[0] = true;
    const sim::Observation& o = t.x[0];
    t.r[0] = std::tanh(o.at(0, 2) / 5.0) + 0.5 * std::cos(o.at(0, 0) / 20.0);
  }
  ReplayBuffer buf(pool.size());
  for (auto& t : pool) buf.push(t);
  Learner l(Variant::Maddpg, small_learner(0.003), 7);
  Rng rng(derive_seed(7, "critic-fit"));
  std::vector<double> loss;
  for (int k = 0; k < 200; ++k) {
    const auto batch = *buf.sample(64, rng);
    loss.push_back(critic_update(l.agent(0), 0, batch, l.target_actors(), 0.95));
  }
  auto block = [&](int b) {
    double s = 0.0;
    for (int k = 40 * b; k < 40 * (b + 1); ++k) s += loss[static_cast<std::size_t>(k)];
    return s / 40.0;
  };
  for (int b = 1; b < 5; ++b) CHECK(block(b) < block(b - 1));
  CHECK(block(4) < 0.25 * block(0));
}

TEST_CASE("actor update against a constant critic changes nothing") {
  const auto ts = random_transitions(32, 34);
  for (Variant v : {Variant::Maddpg, Variant::MaGaDdpg}) {
    Learner l(v, small_learner(), 12);
    AgentNets& n = l.agent(3);
    for (nn::Linear& lin : n.critic.mlp.layers) lin.weight.value().fill(0.0);
    n.critic.mlp.layers.back().bias.value()[0] = 2.5;
    const auto before = values_of(params_of(std::as_const(n.actor)));
    Rng rng(5);
    const double obj = actor_update(n, 3, ptrs(ts), 1.0, rng);
    CHECK(obj == 2.5);
    for (const nn::Parameter* p : params_of(std::as_const(n.actor)))
      for (double g : p->grad().values()) CHECK(g == 0.0);
    CHECK(max_change(params_of(std::as_const(n.actor)), before) <= 1e-8);
  }
}

TEST_CASE("actor objective gradient matches finite differences on the soft path") {
  const auto ts = random_transitions(6, 35);
  const auto batch = ptrs(ts);
  for (Variant v : {Variant::Maddpg, Variant::AttentionMaddpg}) {
    NetShape sh;
    sh.hidden = 6;
    sh.d_k = 4;
    sh.critic_hidden = 6;
    LearnerConfig lc;
    lc.shape = sh;
    Learner l(v, lc, 13);
    AgentNets& n = l.agent(1);
    Rng rng(derive_seed(13, "fd-noise"));
    nn::Tensor noise({batch.size(), static_cast<std::size_t>(sim::kNumActions)}, 0.0);
    for (double& g : noise.values()) g = gumbel(rng);
    const Critic& critic = n.critic;
    const ct::GradCheck gc = ct::grad_check(params_of(n.actor), [&](nn::Tape& t) {
      return actor_objective(t, n.actor, critic, 1, batch, noise, 0.7, false);
    }, 1e-5, 1e-3, 1e-7);
    INFO(gc.worst);
    CHECK(gc.checked > 0);
    CHECK(gc.failures == 0);
  }
}

TEST_CASE("bandit: an actor facing Q = [FASTER] learns to choose FASTER") {
  const auto pool = random_transitions(600, 36);
  const int agent = 0;
  const std::size_t faster_col = sim::kNumAgents * (8 * sim::kNumFeatures) + agent * sim::kNumActions + 2;
  for (Variant v : {Variant::Maddpg, Variant::MaGaDdpg}) {
    Learner l(v, small_learner(), 14);
    AgentNets& n = l.agent(agent);
    auto& layers = n.critic.mlp.layers;
    zero_all(params_of(n.critic));
    layers[0].weight.value()(faster_col, 0) = 1.0;
    layers[1].weight.value()(0, 0) = 1.0;
    layers[2].weight.value()(0, 0) = 1.0;
    const auto critic_before = values_of(params_of(std::as_const(n.critic)));

    ReplayBuffer buf(400);
    for (std::size_t k = 0; k < 400; ++k) buf.push(pool[k]);
    Rng rng(derive_seed(14, "bandit"));
    auto share = [&] {
      int hits = 0;
      Rng unused(0);
      for (std::size_t k = 400; k < pool.size(); ++k)
        hits += actor_forward(n.actor, pool[k].x[agent], {}, unused).action == sim::MetaAction::Faster;
      return static_cast<double>(hits) / static_cast<double>(pool.size() - 400);
    };
    int used = 0;
    while (used < 500 && share() < 0.95) {
      for (int k = 0; k < 10; ++k, ++used) actor_update(n, agent, *buf.sample(64, rng), 1.0, rng);
    }
    INFO(to_string(v), " updates ", used);
    CHECK(share() >= 0.95);
    CHECK(used <= 500);
    CHECK(max_change(params_of(std::as_const(n.critic)), critic_before) == 0.0);
  }
}

TEST_CASE("learner checkpoint round trip and variant check") {
  const auto ts = random_transitions(32, 37);
  Learner a(Variant::MaGaDdpg, small_learner(), 15);
  Rng rng(3);
  a.update(ptrs(ts), 0.8, rng);
  const nn::Checkpoint ck = a.to_checkpoint();
  Learner b(Variant::MaGaDdpg, small_learner(), 99);
  b.load_checkpoint(ck);
  for (int i = 0; i < sim::kNumAgents; ++i) {
    const auto pa = params_of(std::as_const(a.agent(i).actor)), pb = params_of(std::as_const(b.agent(i).actor));
    for (std::size_t k = 0; k < pa.size(); ++k) CHECK(pa[k]->value() == pb[k]->value());
    CHECK(a.agent(i).critic_opt.steps() == b.agent(i).critic_opt.steps());
  }
  // Identical next updates prove the optimizer moments came along too.
  Rng ra(8), rb(8);
  a.update(ptrs(ts), 0.8, ra);
  b.update(ptrs(ts), 0.8, rb);
  CHECK(a.to_checkpoint().serialize() == b.to_checkpoint().serialize());

  Learner other(Variant::AttentionMaddpg, small_learner(), 15);
  CHECK_THROWS_AS(other.load_checkpoint(ck), nn::CheckpointError);
}

TEST_CASE("stored actions are the executed ones under the inspector") {
  const sim::IntersectionEnv env{sim::ScenarioConfig{}};
  const Learner l(Variant::MaGaDdpg, small_learner(), 16);
  const auto actors = l.actors();
  const PolicyConfig pc;
  EpisodeOptions eo;
  eo.keep_transitions = true;
  eo.record_trace = true;
  int corrected = 0;
  for (int ep = 0; ep < 5; ++ep) {
    Rng rng(ep);
    const EpisodeRun run = run_episode(env, derive_seed(16, std::to_string(ep)), actors, pc, {true, 0.5, 1.0}, rng, eo);
    REQUIRE(run.trace.has_value());
    REQUIRE(run.transitions.size() == run.trace->decisions.size());
    for (std::size_t k = 0; k < run.transitions.size(); ++k) {
      const auto& d = run.trace->decisions[k];
      for (int i = 0; i < sim::kNumAgents; ++i) {
        CHECK(run.transitions[k].a[static_cast<std::size_t>(i)] == d.executed[static_cast<std::size_t>(i)]);
      }
      corrected += d.proposed != d.executed;
    }
  }
  MESSAGE("decision steps with a correction: ", corrected);
}

TEST_CASE("train: zero episodes gives an empty log and the initial checkpoint") {
  const fs::path dir = fs::temp_directory_path() / "cavmarl_test_train0";
  fs::remove_all(dir);
  TrainOptions opt;
  opt.out_dir = dir;
  PolicyConfig pc;
  const TrainResult res = train(tiny_train(0), sim::ScenarioConfig{}, pc, opt);
  CHECK(res.log.empty());
  REQUIRE(res.checkpoints.size() == 1);
  CHECK(res.checkpoints[0].filename() == "ep_0.ckpt");
  const nn::Checkpoint ck = nn::Checkpoint::load(res.checkpoints[0]);
  CHECK(ck.metadata.at("episodes_done") == 0);
  std::istringstream log(slurp(dir / "train_log.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 1);
  CHECK(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("train: fixed seed gives identical logs and checkpoints") {
  const fs::path d1 = fs::temp_directory_path() / "cavmarl_test_train_a";
  const fs::path d2 = fs::temp_directory_path() / "cavmarl_test_train_b";
  fs::remove_all(d1);
  fs::remove_all(d2);
  PolicyConfig pc;
  TrainOptions o1, o2;
  o1.out_dir = d1;
  o2.out_dir = d2;
  const TrainConfig cfg = tiny_train(4);
  const TrainResult a = train(cfg, sim::ScenarioConfig{}, pc, o1);
  const TrainResult b = train(cfg, sim::ScenarioConfig{}, pc, o2);
  REQUIRE(a.log.size() == 4);
  CHECK(a.log.back().updates > 0);
  for (std::size_t k = 0; k < a.log.size(); ++k) CHECK(format_log_row(a.log[k]) == format_log_row(b.log[k]));
  CHECK(slurp(d1 / "train_log.csv") == slurp(d2 / "train_log.csv"));
  CHECK(slurp(d1 / "checkpoints" / "final.ckpt") == slurp(d2 / "checkpoints" / "final.ckpt"));

  // Resuming continues the episode numbering and appends to the log.
  TrainOptions o3;
  o3.out_dir = d1;
  o3.resume = d1 / "checkpoints" / "final.ckpt";
  const TrainResult c = train(tiny_train(6), sim::ScenarioConfig{}, pc, o3);
  REQUIRE(c.log.size() == 2);
  CHECK(c.log[0].episode == 4);
  std::istringstream log(slurp(d1 / "train_log.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 7);

  PolicyConfig wrong;
  wrong.variant = Variant::Maddpg;
  CHECK_THROWS_AS(train(tiny_train(6), sim::ScenarioConfig{}, wrong, o3), nn::CheckpointError);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("config validation") {
  LearnerConfig lc;
  lc.gamma = 1.0;
  CHECK_THROWS(lc.validate());
  lc.gamma = 0.5;
  lc.tau = 0.0;
  CHECK_THROWS(lc.validate());
  TrainConfig tc;
  tc.gamma = 0.0;
  CHECK_THROWS(tc.validate());
  CHECK(parse_variant("ma_ga_ddpg") == Variant::MaGaDdpg);
  CHECK_FALSE(parse_variant("ddpg").has_value());
}
