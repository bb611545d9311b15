#ifndef BEASTPIPE_MONO_HPP_
#define BEASTPIPE_MONO_HPP_

#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "beastpipe/config.hpp"
#include "beastpipe/env.hpp"
#include "beastpipe/learner.hpp"

namespace beastpipe {

// Tracks who owns each shared buffer index. Every move between the free
// queue, an actor, the full queue and a learner thread is checked against
// the index's recorded state; an illegal move is counted as a violation.
class IndexLedger {
 public:
  enum class State { kFree, kActor, kFull, kLearner };

  // Limits on simultaneously owned indices; -1 disables the check.
  explicit IndexLedger(std::int64_t num_buffers, std::int64_t max_actor_owned = -1,
                       std::int64_t max_learner_owned = -1);

  void take_free(std::int64_t index);   // free -> actor
  void fill(std::int64_t index);        // actor -> full
  void take_full(std::int64_t index);   // full -> learner
  void release(std::int64_t index);     // learner -> free

  // Returns an index to the free state without queueing it (shutdown
  // paths); reconcile() counts it as free.
  void abandon(std::int64_t index, State from);

  // Recounts the states: they must cover num_buffers indices and owned
  // counts must respect the limits. Counts a violation on failure.
  bool audit();

  std::int64_t violations() const;
  std::int64_t trips() const;  // completed learner -> free returns
  std::int64_t audits() const;
  std::int64_t num_buffers() const { return static_cast<std::int64_t>(states_.size()); }
  std::vector<State> states() const;

  // Exact conservation check given every index found in the queues at the
  // end of a run: together with owned indices they must be 0..n-1 once each.
  bool reconcile(const std::vector<std::int64_t>& free_indices,
                 const std::vector<std::int64_t>& full_indices);

 private:
  void move_locked(std::int64_t index, State from, State to);

  mutable std::mutex mu_;
  std::vector<State> states_;
  std::int64_t max_actor_owned_;
  std::int64_t max_learner_owned_;
  std::vector<std::int64_t> abandoned_;
  std::int64_t violations_ = 0;
  std::int64_t trips_ = 0;
  std::int64_t audits_ = 0;
};

struct MonoResult {
  MetricsRecord last;
  EnvSpec spec;
  std::int64_t max_staleness = 0;
  std::int64_t rollouts_produced = 0;
  std::int64_t rollouts_consumed = 0;
  std::int64_t index_violations = 0;
  std::int64_t index_trips = 0;
  std::int64_t audits = 0;
  bool conserved = false;
  double seconds = 0.0;
};

// Single-process runtime over pre-allocated rollout buffers cycled through
// a free queue and a full queue. With one actor and one learner thread the
// actor pins its r-th rollout to parameter version floor(r / batch_size),
// which makes a seeded run reproducible; otherwise actors read the latest
// parameters at every step.
MonoResult run_mono(const TrainConfig& cfg, const EnvFactory& factory,
                    Learner::Callback on_metrics = {},
                    std::optional<ModelParams> initial = std::nullopt);

}  // namespace beastpipe

#endif  // BEASTPIPE_MONO_HPP_
