#include <doctest.h>

#include <set>
#include <thread>

#include "beastpipe/actor_pool.hpp"
#include "beastpipe/checkpoint.hpp"
#include "beastpipe/env_server.hpp"
#include "beastpipe/mono.hpp"
#include "beastpipe/poly.hpp"
#include "oracles.hpp"
#include "pipeline_checks.hpp"
#include "test_util.hpp"

using namespace beastpipe;
using namespace std::chrono_literals;
using testutil::to_vec;

namespace {

ModelStore make_store(std::int64_t obs, std::int64_t hidden, std::int64_t actions, std::uint64_t seed) {
  ModelParams p = ModelParams::init(obs, hidden, actions, seed);
  RmsPropState opt = RmsPropState::for_params(p, 0.005, 0.99, 0.01);
  return ModelStore(std::move(p), std::move(opt));
}

bool same_env(const EnvOutput& a, const EnvOutput& b) {
  return a.observation == b.observation && a.reward == b.reward && a.done == b.done &&
         a.episode_step == b.episode_step && a.episode_return == b.episode_return;
}

// Live actor pool against a local server, one inference thread, learner
// queue of batch size one that the test drains itself.
struct ActorRig {
  EnvServer server;
  ModelStore store;
  DynamicBatcher batcher;
  BatchingQueue<Rollout> queue;
  std::thread inference;
  std::unique_ptr<ActorPool> pool;

  ActorRig(const std::string& env, std::int64_t actors, std::int64_t T, std::int64_t capacity = 0)
      : server(HostPort{"127.0.0.1", 0}, env_factory(env), 16),
        store(make_store(num_elements(env_factory(env)()->spec().obs.dims), 8,
                         env_factory(env)()->spec().num_actions, 5)),
        batcher(actors),
        queue(1, capacity) {
    server.start();
    inference = std::thread([this] { inference_loop(store, batcher, 17); });
    pool = std::make_unique<ActorPool>(actors, T, std::vector<HostPort>{server.bound_address()},
                                       env_factory(env)()->spec(), queue, batcher, 8);
    pool->start();
  }
  ~ActorRig() { shutdown(); }
  void shutdown() {
    queue.close();
    batcher.close();
    pool->stop();
    if (inference.joinable()) inference.join();
    server.stop();
  }
};

}  // namespace

TEST_CASE("inference loop answers a waiting batch with one forward pass") {
  ModelStore store = make_store(3, 8, 4, 2);
  DynamicBatcher batcher(8);
  std::vector<ArrayMap> replies(8);
  std::vector<std::thread> actors;
  for (int i = 0; i < 8; ++i) {
    actors.emplace_back([&, i] {
      EnvOutput e;
      e.observation = NDArray::from<float>({3}, {static_cast<float>(i), 1.0f, -1.0f});
      replies[i] = batcher.submit(make_inference_request(e));
    });
  }
  while (batcher.counters().submitted < 8) std::this_thread::sleep_for(1ms);
  std::thread inference([&] { inference_loop(store, batcher, 1); });
  for (auto& t : actors) t.join();
  batcher.close();
  inference.join();
  CHECK(batcher.counters().batches == 1);

  const auto params = store.snapshot();
  const oracle::Mlp mlp = testutil::to_oracle(*params);
  for (int i = 0; i < 8; ++i) {
    const AgentReply r = parse_inference_reply(replies[i]);
    CHECK(r.version == 0);
    CHECK(r.output.action >= 0);
    CHECK(r.output.action < 4);
    std::vector<double> logits, baseline;
    oracle::mlp_forward(mlp, {static_cast<double>(i), 1.0, -1.0}, 1, logits, baseline);
    const auto got = to_vec(r.output.policy_logits);
    REQUIRE(got.size() == 4);
    for (int a = 0; a < 4; ++a) CHECK(got[a] == doctest::Approx(logits[a]).epsilon(1e-5));
    CHECK(r.output.baseline == doctest::Approx(baseline[0]).epsilon(1e-5));
  }
}

TEST_CASE("greedy inference picks the argmax") {
  ModelParams p = ModelParams::init(1, 4, 2, 0);
  p.bp.set(0, -50.0);
  p.bp.set(1, 50.0);
  ModelStore store(p, RmsPropState::for_params(p, 0.0, 0.99, 0.01));
  DynamicBatcher batcher(1);
  std::thread inference([&] { inference_loop(store, batcher, 1, true); });
  EnvOutput e;
  e.observation = NDArray::from<float>({1}, {1.0f});
  for (int i = 0; i < 20; ++i) CHECK(parse_inference_reply(batcher.submit(make_inference_request(e))).output.action == 1);
  batcher.close();
  inference.join();
}

TEST_CASE("consecutive rollouts overlap by one row and replay the environment") {
  ActorRig rig("grid5", 1, 2);
  std::vector<Rollout> rollouts;
  for (int i = 0; i < 12; ++i) rollouts.push_back(std::move(rig.queue.next_batch()->front()));
  rig.shutdown();

  for (std::size_t k = 0; k + 1 < rollouts.size(); ++k) {
    const Rollout& a = rollouts[k];
    const Rollout& b = rollouts[k + 1];
    CHECK(same_env(a.env_row(2), b.env_row(0)));
    CHECK(a.agent_row(2).action == b.agent_row(0).action);
    CHECK(a.agent_row(2).policy_logits == b.agent_row(0).policy_logits);
    CHECK(a.agent_row(2).baseline == b.agent_row(0).baseline);
    CHECK(b.id > a.id);
  }
  const EnvOutput first = rollouts[0].env_row(0);
  CHECK(first.done);
  CHECK(first.episode_step == 0);

  EpisodeAccounting local(std::make_unique<GridMaze>());
  CHECK(same_env(local.initial(), first));
  for (const Rollout& r : rollouts) {
    for (std::int64_t t = 0; t < 2; ++t) CHECK(same_env(local.step(r.agent_row(t).action), r.env_row(t + 1)));
  }
}

TEST_CASE("actor restarts after server loss drop partials and never duplicate ids") {
  ActorRig rig("grid5", 3, 3, 64);
  std::vector<Rollout> got;
  std::mutex mu;
  std::thread consumer([&] {
    while (auto b = rig.queue.next_batch()) {
      std::lock_guard lock(mu);
      got.push_back(std::move(b->front()));
    }
  });
  auto wait_rollouts = [&](std::int64_t n) {
    const auto deadline = std::chrono::steady_clock::now() + 10s;
    while (rig.pool->stats().rollouts < n && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(2ms);
    }
    return rig.pool->stats().rollouts >= n;
  };
  REQUIRE(wait_rollouts(30));
  const auto port = rig.server.port();
  rig.server.stop();
  EnvServer replacement(HostPort{"127.0.0.1", port}, env_factory("grid5"), 16);
  replacement.start();
  const auto before = rig.pool->stats().rollouts;
  REQUIRE(wait_rollouts(before + 30));
  rig.queue.close();
  consumer.join();
  rig.shutdown();
  replacement.stop();

  const auto stats = rig.pool->stats();
  CHECK(stats.reconnects >= 3);
  CHECK(stats.failed_actors == 0);
  std::set<std::uint64_t> ids;
  for (const Rollout& r : got) {
    CHECK(ids.insert(r.id).second);
    const std::vector<Rollout> one = {r};
    CHECK_NOTHROW(validate_batch(stack_rollouts(one), {1, 4}));
  }
  const auto residual = rig.queue.take_residual();
  CHECK(static_cast<std::int64_t>(got.size() + residual.size()) == stats.rollouts);
  // After a reconnect the first rollout starts on the initial done row.
  std::int64_t fresh_starts = 0;
  for (const Rollout& r : got) fresh_starts += r.env_row(0).done && r.env_row(0).episode_step == 0;
  CHECK(fresh_starts >= 6);
}

TEST_CASE("poly learns the bandit across two servers") {
  auto cfg = pipecheck::bandit_poly_config(4, 12000, 2);
  const auto r = pipecheck::run_poly_local(cfg, "bandit", 2);
  INFO(r.detail);
  CHECK(r.frames >= 12000);
  CHECK(r.final_mean_return >= 0.95);
}

TEST_CASE("poly staleness stays within the queue-capacity bound") {
  for (std::int64_t n : {2, 8}) {
    for (std::int64_t B : {1, 4}) {
      auto cfg = pipecheck::bandit_poly_config(n, 4000, 9);
      cfg.batch_size = B;
      cfg.unroll_length = 4;
      const auto r = pipecheck::run_poly_local(cfg, "bandit");
      // Row 0 of a rollout was inferred before its predecessor was queued,
      // so its age spans two passes through a queue of 2B items with n
      // actors in line, plus the batch being trained.
      const std::int64_t per_pass = (2 * B + n + B - 1) / B;
      INFO("n " << n << " B " << B << ": " << r.detail);
      CHECK(r.max_staleness <= 2 * per_pass + 1);
    }
  }
}

TEST_CASE("poly reports unreachable servers and mismatched environments") {
  TrainConfig cfg;
  cfg.num_actors = 1;
  cfg.connect_retries = 1;
  {
    // Grab a free port and release it so nothing listens there.
    EnvServer probe(HostPort{"127.0.0.1", 0}, env_factory("bandit"), 1);
    probe.start();
    cfg.server_addresses = {probe.bound_address()};
  }
  CHECK_THROWS_AS(run_poly(cfg), ConnectError);

  EnvServer grid(HostPort{"127.0.0.1", 0}, env_factory("grid5"), 4);
  EnvServer bandit(HostPort{"127.0.0.1", 0}, env_factory("bandit"), 4);
  grid.start();
  bandit.start();
  cfg.server_addresses = {grid.bound_address(), bandit.bound_address()};
  CHECK_THROWS_AS(run_poly(cfg), ConfigError);
}

TEST_CASE("zero learning rate leaves the parameters unchanged") {
  testutil::TempDir dir;
  TrainConfig cfg;
  cfg.num_actors = 2;
  cfg.batch_size = 2;
  cfg.unroll_length = 5;
  cfg.hidden_size = 8;
  cfg.learning_rate = 0.0;
  cfg.total_steps = 20 * cfg.frames_per_step();
  cfg.logdir = dir.path();
  const ModelParams initial = ModelParams::init(25, 8, 4, 77);
  const MonoResult r = run_mono(cfg, env_factory("grid5"), {}, initial);
  CHECK(r.last.step == 20);
  const ModelParams final_model = load_checkpoint(dir.path() / "model.tbst");
  CHECK(final_model.version == 20);
  CHECK(static_cast<const ParamTensors&>(final_model) == static_cast<const ParamTensors&>(initial));
}

TEST_CASE("mono keeps every buffer index accounted for over 100 batches") {
  const auto r = pipecheck::mono_conservation(100, 4);
  INFO(r.detail);
  CHECK(r.batches == 100);
  CHECK(r.violations == 0);
  CHECK(r.conserved);
  CHECK(r.audits >= 100);
  CHECK(r.trips >= 400);
  CHECK(r.produced >= r.consumed);
}

TEST_CASE("mono buffer ledger flags illegal moves") {
  IndexLedger ledger(3, 1, 1);
  ledger.take_free(0);
  ledger.fill(0);
  ledger.take_full(0);
  ledger.release(0);
  CHECK(ledger.violations() == 0);
  CHECK(ledger.trips() == 1);
  ledger.fill(1);
  CHECK(ledger.violations() == 1);
  ledger.take_free(1);
  ledger.take_free(2);
  CHECK_FALSE(ledger.audit());
  CHECK_FALSE(ledger.reconcile({0}, {}));
  ledger.abandon(1, IndexLedger::State::kActor);
  ledger.abandon(2, IndexLedger::State::kActor);
  CHECK(ledger.audit());
  CHECK(ledger.reconcile({0}, {}));
  CHECK_FALSE(ledger.reconcile({0, 0}, {}));
}

TEST_CASE("seeded mono runs with one actor reproduce their losses") {
  TrainConfig cfg;
  cfg.num_actors = 1;
  cfg.batch_size = 2;
  cfg.unroll_length = 10;
  cfg.hidden_size = 16;
  cfg.total_steps = 100 * cfg.frames_per_step();
  cfg.seed = 31;
  const auto a = pipecheck::run_mono_env(cfg, "grid5");
  const auto b = pipecheck::run_mono_env(cfg, "grid5");
  cfg.seed = 32;
  const auto c = pipecheck::run_mono_env(cfg, "grid5");
  REQUIRE(a.records.size() == 100);
  REQUIRE(b.records.size() == 100);
  bool any_diff = false;
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(a.records[i].losses.total == b.records[i].losses.total);
    CHECK(a.records[i].losses.pg_loss == b.records[i].losses.pg_loss);
    CHECK(a.records[i].losses.baseline_loss == b.records[i].losses.baseline_loss);
    CHECK(a.records[i].losses.entropy_loss == b.records[i].losses.entropy_loss);
    any_diff = any_diff || a.records[i].losses.total != c.records[i].losses.total;
  }
  CHECK(any_diff);
}

TEST_CASE("mono learns the grid from five seeds") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = pipecheck::run_mono_env(pipecheck::grid_mono_config(150000, seed), "grid5");
    INFO("seed " << seed << ": " << r.detail);
    CHECK(r.final_mean_return >= 0.9);
  }
}

TEST_CASE("mono rejects invalid configurations before starting") {
  TrainConfig cfg;
  cfg.num_buffers = cfg.batch_size;
  CHECK_THROWS_AS(run_mono(cfg, env_factory("grid5")), ConfigError);
}
