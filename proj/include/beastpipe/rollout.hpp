#ifndef BEASTPIPE_ROLLOUT_HPP_
#define BEASTPIPE_ROLLOUT_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "beastpipe/ndarray.hpp"

namespace beastpipe {

struct ObsSpec {
  DType dtype = DType::kFloat32;
  Shape dims;

  friend bool operator==(const ObsSpec&, const ObsSpec&) = default;
};

// One environment step as seen by an actor. done=true marks the first row
// of a new episode; on that row reward, episode_step and episode_return
// still describe the step that ended the previous episode (all zero on the
// very first row of a connection).
struct EnvOutput {
  NDArray observation;
  float reward = 0.0f;
  bool done = false;
  std::int64_t episode_step = 0;
  float episode_return = 0.0f;
};

struct AgentOutput {
  std::int64_t action = 0;
  NDArray policy_logits;  // [num_actions] float32
  float baseline = 0.0f;
};

// T+1 consecutive rows, stored column-wise so a rollout doubles as a
// pre-allocated buffer. Row t pairs the env output at t with the agent's
// response to it; row T is the bootstrap row and is reused as row 0 of the
// next rollout from the same actor.
class Rollout {
 public:
  Rollout() = default;
  Rollout(std::int64_t unroll_length, const ObsSpec& obs, std::int64_t num_actions);

  std::int64_t unroll_length() const { return reward.dim(0) - 1; }
  std::int64_t rows() const { return reward.dim(0); }
  std::int64_t num_actions() const { return policy_logits.dim(1); }
  ObsSpec obs_spec() const;

  void set_row(std::int64_t t, const EnvOutput& env, const AgentOutput& agent);
  EnvOutput env_row(std::int64_t t) const;
  AgentOutput agent_row(std::int64_t t) const;

  NDArray observation;     // [T+1, *obs]
  NDArray reward;          // [T+1] f32
  NDArray done;            // [T+1] u8
  NDArray episode_step;    // [T+1] i64
  NDArray episode_return;  // [T+1] f32
  NDArray policy_logits;   // [T+1, A] f32
  NDArray baseline;        // [T+1] f32
  NDArray action;          // [T+1] i64

  // Oldest parameter version that contributed an action.
  std::int64_t model_version = 0;
  std::uint64_t id = 0;
};

// Time-major learner input: axis 0 is time (T+1 rows), axis 1 is batch.
struct TrainingBatch {
  NDArray observation;    // [T+1, B, *obs]
  NDArray reward;         // [T+1, B] f32
  NDArray done;           // [T+1, B] u8
  NDArray policy_logits;  // [T+1, B, A] f32
  NDArray baseline;       // [T+1, B] f32
  NDArray action;         // [T+1, B] i64
  std::vector<std::int64_t> model_versions;  // [B]

  std::int64_t unroll_length() const { return reward.dim(0) - 1; }
  std::int64_t batch_size() const { return reward.dim(1); }
  std::int64_t num_actions() const { return policy_logits.dim(2); }
};

// Stacks along batch_dim (only 1 is supported), preserving order.
TrainingBatch stack_rollouts(std::span<const Rollout> rollouts, std::int64_t batch_dim = 1);

// Column `index` of the batch axis as a Rollout (episode bookkeeping columns
// are not part of a batch and come back zeroed).
Rollout slice_batch(const TrainingBatch& batch, std::int64_t index);

struct BatchExpectations {
  std::int64_t batch_size = -1;  // -1: any
  std::int64_t num_actions = -1;
};

// Throws SchemaError naming the first offending field.
void validate_batch(const TrainingBatch& batch, const BatchExpectations& expect = {});

}  // namespace beastpipe

#endif  // BEASTPIPE_ROLLOUT_HPP_
