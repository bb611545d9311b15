#include "beastpipe/env.hpp"

#include <algorithm>

namespace beastpipe {

namespace {

void check_action(std::int64_t action, std::int64_t num_actions) {
  if (action < 0 || action >= num_actions) {
    throw InvalidActionError("action " + std::to_string(action) + " outside [0, " +
                             std::to_string(num_actions) + ")");
  }
}

}  // namespace

GridMaze::GridMaze(int side, int step_limit) : side_(side), step_limit_(step_limit) {
  if (side_ < 2) throw ConfigError("grid side must be >= 2");
  if (step_limit_ < 1) throw ConfigError("step limit must be >= 1");
}

EnvSpec GridMaze::spec() const {
  return EnvSpec{ObsSpec{DType::kFloat32, {static_cast<std::int64_t>(side_) * side_}}, 4};
}

NDArray GridMaze::observe() const {
  NDArray obs(DType::kFloat32, {static_cast<std::int64_t>(side_) * side_});
  obs.values<float>()[static_cast<std::size_t>(y_ * side_ + x_)] = 1.0f;
  return obs;
}

NDArray GridMaze::reset() {
  x_ = y_ = steps_ = 0;
  return observe();
}

void GridMaze::place(int x, int y) {
  if (x < 0 || y < 0 || x >= side_ || y >= side_) throw ConfigError("position outside grid");
  x_ = x;
  y_ = y;
}

StepResult GridMaze::step(std::int64_t action) {
  check_action(action, 4);
  switch (action) {
    case 0:
      y_ = std::max(0, y_ - 1);
      break;
    case 1:
      y_ = std::min(side_ - 1, y_ + 1);
      break;
    case 2:
      x_ = std::max(0, x_ - 1);
      break;
    case 3:
      x_ = std::min(side_ - 1, x_ + 1);
      break;
  }
  ++steps_;
  const bool at_goal = x_ == side_ - 1 && y_ == side_ - 1;
  return StepResult{observe(), at_goal ? 1.0f : 0.0f, at_goal || steps_ >= step_limit_};
}

BanditEnv::BanditEnv(std::vector<float> rewards) : rewards_(std::move(rewards)) {
  if (rewards_.empty()) throw ConfigError("bandit needs at least one arm");
}

EnvSpec BanditEnv::spec() const {
  return EnvSpec{ObsSpec{DType::kFloat32, {1}}, static_cast<std::int64_t>(rewards_.size())};
}

NDArray BanditEnv::reset() { return NDArray::from<float>({1}, {1.0f}); }

StepResult BanditEnv::step(std::int64_t action) {
  check_action(action, static_cast<std::int64_t>(rewards_.size()));
  return StepResult{reset(), rewards_[static_cast<std::size_t>(action)], true};
}

std::vector<std::string> env_names() { return {"bandit", "grid5"}; }

EnvFactory env_factory(std::string_view name) {
  if (name == "grid5") return [] { return std::make_unique<GridMaze>(5, 50); };
  if (name == "bandit") return [] { return std::make_unique<BanditEnv>(); };
  std::string valid;
  for (const auto& n : env_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown env '" + std::string(name) + "'; valid names: " + valid);
}

EpisodeAccounting::EpisodeAccounting(std::unique_ptr<Environment> env)
    : env_(std::move(env)), spec_(env_->spec()) {}

EnvOutput EpisodeAccounting::initial() {
  episode_step_ = 0;
  episode_return_ = 0.0f;
  return EnvOutput{env_->reset(), 0.0f, true, 0, 0.0f};
}

EnvOutput EpisodeAccounting::step(std::int64_t action) {
  StepResult r = env_->step(action);
  ++episode_step_;
  episode_return_ += r.reward;
  EnvOutput out{std::move(r.observation), r.reward, r.done, episode_step_, episode_return_};
  if (r.done) {
    out.observation = env_->reset();
    episode_step_ = 0;
    episode_return_ = 0.0f;
  }
  return out;
}

}  // namespace beastpipe
