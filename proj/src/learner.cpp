#include "beastpipe/learner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "beastpipe/checkpoint.hpp"
#include "beastpipe/log.hpp"

namespace beastpipe {

namespace {

std::string describe_array(const char* name, const NDArray& a) {
  std::ostringstream os;
  os << name << ' ' << dtype_name(a.dtype()) << shape_str(a.dims());
  if (a.size() > 0) {
    double lo = a.get(0), hi = a.get(0);
    std::int64_t non_finite = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
      const double v = a.get(i);
      if (!std::isfinite(v)) {
        ++non_finite;
        continue;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    os << " min=" << lo << " max=" << hi << " non_finite=" << non_finite;
  }
  return os.str();
}

std::string describe_batch(const TrainingBatch& b) {
  std::ostringstream os;
  os << "offending batch:\n  " << describe_array("observation", b.observation) << "\n  "
     << describe_array("reward", b.reward) << "\n  " << describe_array("done", b.done) << "\n  "
     << describe_array("policy_logits", b.policy_logits) << "\n  "
     << describe_array("baseline", b.baseline) << "\n  " << describe_array("action", b.action)
     << "\n  model_versions:";
  for (auto v : b.model_versions) os << ' ' << v;
  return os.str();
}

}  // namespace

LearnerStepResult learner_step(ModelStore& store, const TrainingBatch& batch,
                               const VtraceConfig& vtrace, double grad_norm_clipping,
                               std::int64_t expected_batch_size) {
  const auto params = store.snapshot();
  validate_batch(batch, BatchExpectations{expected_batch_size, params->num_actions()});
  const auto rows = batch.unroll_length() + 1;
  const auto nb = batch.batch_size();
  const auto na = params->num_actions();
  const auto obs_dim = num_elements(Shape(batch.observation.dims().begin() + 2,
                                          batch.observation.dims().end()));
  const NDArray obs = batch.observation.reshaped({rows * nb, obs_dim});

  LearnerStepResult res;
  try {
    const MlpOutput out = mlp_forward(*params, obs);
    const LossOutput loss = compute_losses(batch, out.logits.reshaped({rows, nb, na}),
                                           out.baseline.reshaped({rows, nb}), vtrace);
    GradientSet grads =
        mlp_backward(*params, obs, loss.logits_grad.reshaped({rows * nb, na}),
                     loss.baseline_grad.reshaped({rows * nb}));
    res.grad_norm = clip_grad_norm(grads, grad_norm_clipping);
    res.losses = loss.losses;
    const auto oldest = *std::min_element(batch.model_versions.begin(), batch.model_versions.end());
    res.staleness = store.version() - oldest;
    res.version = store.apply_gradients(grads);
  } catch (const NonFiniteError& e) {
    log_error(std::string("training halted: ") + e.what() + "\n" + describe_batch(batch));
    throw;
  }
  return res;
}

Learner::Learner(ModelStore& store, const TrainConfig& cfg, Callback on_metrics)
    : store_(store),
      cfg_(cfg),
      on_metrics_(std::move(on_metrics)),
      steps_needed_((cfg.total_steps + cfg.frames_per_step() - 1) / cfg.frames_per_step()),
      start_(std::chrono::steady_clock::now()) {
  if (!cfg_.logdir.empty()) {
    std::filesystem::create_directories(cfg_.logdir);
    csv_ = std::make_unique<CsvLogger>(cfg_.logdir / "logs.csv");
  }
}

bool Learner::done() const { return steps_done_.load() >= steps_needed_; }

MetricsRecord Learner::last() const {
  std::lock_guard lock(mu_);
  return last_;
}

std::optional<MetricsRecord> Learner::step(std::span<const Rollout> rollouts) {
  if (steps_reserved_.fetch_add(1) >= steps_needed_) return std::nullopt;

  {
    std::lock_guard lock(mu_);
    for (const auto& r : rollouts) collect_episode_returns(r, episodes_);
  }
  const TrainingBatch batch = stack_rollouts(rollouts);
  const auto res = learner_step(store_, batch, cfg_.vtrace, cfg_.grad_norm_clipping,
                                cfg_.batch_size);
  rollouts_consumed_.fetch_add(static_cast<std::int64_t>(rollouts.size()));
  std::int64_t prev = max_staleness_.load();
  while (res.staleness > prev && !max_staleness_.compare_exchange_weak(prev, res.staleness)) {
  }

  MetricsRecord rec;
  {
    std::lock_guard lock(mu_);
    rec.step = steps_done_.fetch_add(1) + 1;
    rec.frames = rec.step * cfg_.frames_per_step();
    rec.mean_episode_return = episodes_.mean();
    rec.episodes = episodes_.total();
    rec.losses = res.losses;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    rec.fps = secs > 0 ? static_cast<double>(rec.frames) / secs : 0.0;
    rec.version = res.version;
    rec.staleness = res.staleness;
    last_ = rec;
    if (csv_) csv_->write(rec);
  }
  if (cfg_.checkpoint_every > 0 && !cfg_.logdir.empty() && rec.step % cfg_.checkpoint_every == 0) {
    save_checkpoint(*store_.snapshot(),
                    cfg_.logdir / ("checkpoint_" + std::to_string(rec.step) + ".tbst"));
  }
  if (on_metrics_) on_metrics_(rec);
  return rec;
}

void Learner::write_final_checkpoint() const {
  if (cfg_.logdir.empty()) return;
  save_checkpoint(*store_.snapshot(), cfg_.logdir / "model.tbst");
}

MetricsRecord learner_loop(BatchingQueue<Rollout>& queue, Learner& learner) {
  while (!learner.done()) {
    auto rollouts = queue.next_batch();
    if (!rollouts) break;
    if (!learner.step(*rollouts)) break;
  }
  return learner.last();
}

}  // namespace beastpipe
