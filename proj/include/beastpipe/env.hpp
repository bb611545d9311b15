#ifndef BEASTPIPE_ENV_HPP_
#define BEASTPIPE_ENV_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "beastpipe/ndarray.hpp"
#include "beastpipe/rollout.hpp"

namespace beastpipe {

struct EnvSpec {
  ObsSpec obs;
  std::int64_t num_actions = 0;
  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

struct StepResult {
  NDArray observation;
  float reward = 0.0f;
  bool done = false;
};

// Gym-style episodic environment with a discrete action space.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual EnvSpec spec() const = 0;
  virtual NDArray reset() = 0;
  // Throws InvalidActionError outside [0, num_actions).
  virtual StepResult step(std::int64_t action) = 0;
};

// N x N grid, agent starts at (0, 0), goal at (N-1, N-1). Actions
// 0 up (y-1), 1 down (y+1), 2 left (x-1), 3 right (x+1); moves into a wall
// leave the agent in place. Reaching the goal pays +1 and ends the
// episode; hitting the step limit ends it with reward 0. The observation
// is a float32 one-hot of length N*N at index y*N + x.
class GridMaze : public Environment {
 public:
  explicit GridMaze(int side = 5, int step_limit = 50);

  EnvSpec spec() const override;
  NDArray reset() override;
  StepResult step(std::int64_t action) override;

  int x() const { return x_; }
  int y() const { return y_; }
  void place(int x, int y);

 private:
  NDArray observe() const;

  int side_;
  int step_limit_;
  int x_ = 0;
  int y_ = 0;
  int steps_ = 0;
};

// Single-step episodes; action a pays rewards[a]. Observation is float32 [1.0].
class BanditEnv : public Environment {
 public:
  explicit BanditEnv(std::vector<float> rewards = {0.0f, 1.0f});

  EnvSpec spec() const override;
  NDArray reset() override;
  StepResult step(std::int64_t action) override;

 private:
  std::vector<float> rewards_;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

// "grid5" or "bandit"; ConfigError lists the valid names otherwise.
EnvFactory env_factory(std::string_view name);
std::vector<std::string> env_names();

// Adds episode bookkeeping and auto-reset. When the inner episode ends the
// emitted row carries the terminal reward, done=true, the finished
// episode's step count and return, and the first observation of the next
// episode; counters restart from zero after it.
class EpisodeAccounting {
 public:
  explicit EpisodeAccounting(std::unique_ptr<Environment> env);

  const EnvSpec& spec() const { return spec_; }

  // Resets the inner env; reward 0, done=true, counters 0.
  EnvOutput initial();
  EnvOutput step(std::int64_t action);

 private:
  std::unique_ptr<Environment> env_;
  EnvSpec spec_;
  std::int64_t episode_step_ = 0;
  float episode_return_ = 0.0f;
};

}  // namespace beastpipe

#endif  // BEASTPIPE_ENV_HPP_
