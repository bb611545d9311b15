#include <doctest.h>

#include <algorithm>
#include <random>

#include "beastpipe/env.hpp"
#include "beastpipe/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace beastpipe;
using testutil::to_vec;

namespace {

std::vector<double> one_hot(int n, int index) {
  std::vector<double> v(n, 0.0);
  v[index] = 1.0;
  return v;
}

std::int64_t hot_index(const NDArray& obs) {
  const auto v = to_vec(obs);
  return std::find(v.begin(), v.end(), 1.0) - v.begin();
}

// Simulates a uniformly random policy on the library GridMaze.
double library_random_success(int episodes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> act(0, 3);
  GridMaze env;
  int wins = 0;
  for (int e = 0; e < episodes; ++e) {
    env.reset();
    for (;;) {
      const StepResult r = env.step(act(rng));
      if (r.done) {
        wins += r.reward == 1.0f;
        break;
      }
    }
  }
  return static_cast<double>(wins) / episodes;
}

}  // namespace

TEST_CASE("grid reset is the one-hot of the origin") {
  GridMaze env;
  CHECK(env.spec() == EnvSpec{ObsSpec{DType::kFloat32, {25}}, 4});
  const NDArray obs = env.reset();
  CHECK(obs.dtype() == DType::kFloat32);
  CHECK(to_vec(obs) == one_hot(25, 0));
  env.step(3);
  CHECK(to_vec(env.reset()) == to_vec(obs));
  CHECK(env.x() == 0);
  CHECK(env.y() == 0);
}

TEST_CASE("grid transitions") {
  GridMaze env;
  env.reset();
  StepResult r = env.step(3);
  CHECK(env.x() == 1);
  CHECK(env.y() == 0);
  CHECK(r.reward == 0.0f);
  CHECK_FALSE(r.done);
  CHECK(hot_index(r.observation) == 1);

  env.place(4, 3);
  r = env.step(1);
  CHECK(env.x() == 4);
  CHECK(env.y() == 4);
  CHECK(r.reward == 1.0f);
  CHECK(r.done);
}

TEST_CASE("grid moves into walls leave the agent in place") {
  GridMaze env;
  env.reset();
  env.step(0);
  CHECK(env.y() == 0);
  env.step(2);
  CHECK(env.x() == 0);
  env.place(4, 0);
  env.step(3);
  CHECK(env.x() == 4);
  env.place(0, 4);
  env.step(1);
  CHECK(env.y() == 4);
}

TEST_CASE("grid is deterministic") {
  std::mt19937_64 rng(3);
  std::vector<std::int64_t> actions(200);
  for (auto& a : actions) a = static_cast<std::int64_t>(rng() % 4);
  GridMaze a, b;
  a.reset();
  b.reset();
  for (auto act : actions) {
    const StepResult ra = a.step(act), rb = b.step(act);
    CHECK(ra.observation == rb.observation);
    CHECK(ra.reward == rb.reward);
    CHECK(ra.done == rb.done);
    if (ra.done) {
      a.reset();
      b.reset();
    }
  }
}

TEST_CASE("grid step limit ends the episode with zero reward") {
  GridMaze env(5, 50);
  env.reset();
  for (int i = 0; i < 49; ++i) CHECK_FALSE(env.step(0).done);
  const StepResult r = env.step(0);
  CHECK(r.done);
  CHECK(r.reward == 0.0f);
}

TEST_CASE("grid rejects out-of-range actions") {
  GridMaze env;
  env.reset();
  CHECK_THROWS_AS(env.step(4), InvalidActionError);
  CHECK_THROWS_AS(env.step(-1), InvalidActionError);
  CHECK_THROWS_AS(GridMaze(1), ConfigError);
}

TEST_CASE("bandit pays the chosen arm and ends every episode") {
  BanditEnv env;
  CHECK(env.spec() == EnvSpec{ObsSpec{DType::kFloat32, {1}}, 2});
  CHECK(to_vec(env.reset()) == std::vector<double>{1.0});
  StepResult r = env.step(1);
  CHECK(r.reward == 1.0f);
  CHECK(r.done);
  env.reset();
  r = env.step(0);
  CHECK(r.reward == 0.0f);
  CHECK(r.done);
  CHECK(to_vec(r.observation) == std::vector<double>{1.0});
  CHECK_THROWS_AS(env.step(2), InvalidActionError);
}

TEST_CASE("a fresh accounting wrapper starts with a done row") {
  EpisodeAccounting acc(std::make_unique<GridMaze>());
  const EnvOutput e = acc.initial();
  CHECK(e.reward == 0.0f);
  CHECK(e.done);
  CHECK(e.episode_step == 0);
  CHECK(e.episode_return == 0.0f);
  CHECK(hot_index(e.observation) == 0);
}

TEST_CASE("the optimal grid path reaches the goal in 8 steps") {
  EpisodeAccounting acc(std::make_unique<GridMaze>());
  acc.initial();
  const std::int64_t path[] = {3, 3, 3, 3, 1, 1, 1, 1};
  EnvOutput e;
  for (int i = 0; i < 8; ++i) {
    e = acc.step(path[i]);
    if (i < 7) {
      CHECK_FALSE(e.done);
      CHECK(e.reward == 0.0f);
      CHECK(e.episode_step == i + 1);
    }
  }
  CHECK(e.reward == 1.0f);
  CHECK(e.done);
  CHECK(e.episode_step == 8);
  CHECK(e.episode_return == 1.0f);
  CHECK(to_vec(e.observation) == one_hot(25, 0));
  const EnvOutput next = acc.step(3);
  CHECK(next.episode_step == 1);
  CHECK(next.episode_return == 0.0f);
  CHECK(hot_index(next.observation) == 1);
}

TEST_CASE("accounting identities under a random policy") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    EpisodeAccounting acc(std::make_unique<GridMaze>(4, 12));
    EnvOutput prev = acc.initial();
    double running = 0.0;
    for (int t = 0; t < 3000; ++t) {
      const EnvOutput e = acc.step(static_cast<std::int64_t>(rng() % 4));
      const std::int64_t base = prev.done ? 0 : prev.episode_step;
      CHECK(e.episode_step == base + 1);
      running = (prev.done ? 0.0 : running) + e.reward;
      CHECK(e.episode_return == doctest::Approx(running));
      // Episodes of this grid always take more than one step.
      CHECK_FALSE((prev.done && e.done));
      CHECK(e.episode_step <= 12);
      prev = e;
    }
  }
}

TEST_CASE("bandit episodes of length one make every row done") {
  EpisodeAccounting acc(std::make_unique<BanditEnv>());
  acc.initial();
  for (int t = 0; t < 10; ++t) {
    const EnvOutput e = acc.step(t % 2);
    CHECK(e.done);
    CHECK(e.episode_step == 1);
    CHECK(e.episode_return == static_cast<float>(t % 2));
  }
}

TEST_CASE("accounting propagates invalid actions") {
  EpisodeAccounting acc(std::make_unique<BanditEnv>());
  acc.initial();
  CHECK_THROWS_AS(acc.step(5), InvalidActionError);
}

TEST_CASE("env factory by name") {
  CHECK(env_factory("grid5")()->spec().num_actions == 4);
  CHECK(env_factory("bandit")()->spec().num_actions == 2);
  try {
    env_factory("pong");
    FAIL("unknown env accepted");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("grid5") != std::string::npos);
    CHECK(what.find("bandit") != std::string::npos);
  }
  auto names = env_names();
  std::sort(names.begin(), names.end());
  CHECK(names == std::vector<std::string>{"bandit", "grid5"});
}

TEST_CASE("uniform random policy on the 5x5 grid succeeds less than half the time") {
  const double oracle_rate = oracle::grid_random_policy_success(5, 50, 10000, 7);
  const double library_rate = library_random_success(10000, 7);
  INFO("oracle " << oracle_rate << " library " << library_rate);
  CHECK(oracle_rate < 0.5);
  CHECK(library_rate < 0.5);
  // Two independent simulations of the same process agree within sampling noise.
  CHECK(std::abs(oracle_rate - library_rate) < 0.03);
}
