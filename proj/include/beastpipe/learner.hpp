#ifndef BEASTPIPE_LEARNER_HPP_
#define BEASTPIPE_LEARNER_HPP_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>

#include "beastpipe/batching_queue.hpp"
#include "beastpipe/config.hpp"
#include "beastpipe/metrics.hpp"
#include "beastpipe/model_store.hpp"
#include "beastpipe/rollout.hpp"

namespace beastpipe {

struct LearnerStepResult {
  LossBundle losses;
  double grad_norm = 0.0;
  std::int64_t version = 0;    // after the update
  std::int64_t staleness = 0;  // version before the update - min(batch.model_versions)
};

// One optimisation step: validate, forward all (T+1)*B observations,
// V-trace losses, backward, global-norm clip, exclusive RMSProp update.
// A non-finite loss logs a summary of the batch and rethrows.
LearnerStepResult learner_step(ModelStore& store, const TrainingBatch& batch,
                               const VtraceConfig& vtrace, double grad_norm_clipping,
                               std::int64_t expected_batch_size = -1);

// Shared learner state for one training run: step budget, episode window,
// logs and checkpoints. step() may be called from several threads.
class Learner {
 public:
  using Callback = std::function<void(const MetricsRecord&)>;

  Learner(ModelStore& store, const TrainConfig& cfg, Callback on_metrics = {});

  // Processes one batch of rollouts. Returns nullopt, without touching the
  // model, once total_steps frames have been consumed.
  std::optional<MetricsRecord> step(std::span<const Rollout> rollouts);

  // Frames consumed so far reached total_steps.
  bool done() const;

  MetricsRecord last() const;
  std::int64_t max_staleness() const { return max_staleness_.load(); }
  std::int64_t rollouts_consumed() const { return rollouts_consumed_.load(); }

  // Writes logdir/model.tbst when a logdir is configured.
  void write_final_checkpoint() const;

 private:
  ModelStore& store_;
  TrainConfig cfg_;
  Callback on_metrics_;
  std::int64_t steps_needed_;
  std::chrono::steady_clock::time_point start_;

  std::atomic<std::int64_t> steps_reserved_{0};
  std::atomic<std::int64_t> steps_done_{0};
  std::atomic<std::int64_t> max_staleness_{0};
  std::atomic<std::int64_t> rollouts_consumed_{0};

  mutable std::mutex mu_;
  EpisodeTracker episodes_;
  MetricsRecord last_;
  std::unique_ptr<CsvLogger> csv_;
};

// Pulls batches from the learner queue until the budget is spent or the
// queue ends. Returns the last record.
MetricsRecord learner_loop(BatchingQueue<Rollout>& queue, Learner& learner);

}  // namespace beastpipe

#endif  // BEASTPIPE_LEARNER_HPP_
