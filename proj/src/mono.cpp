#include "beastpipe/mono.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <limits>
#include <thread>

#include "beastpipe/log.hpp"

namespace beastpipe {

namespace {

const char* state_name(IndexLedger::State s) {
  switch (s) {
    case IndexLedger::State::kFree:
      return "free";
    case IndexLedger::State::kActor:
      return "actor";
    case IndexLedger::State::kFull:
      return "full";
    case IndexLedger::State::kLearner:
      return "learner";
  }
  return "?";
}

struct Acted {
  AgentOutput output;
  std::int64_t version = 0;
};

Acted act(const ModelParams& params, const NDArray& observation, std::mt19937_64& rng) {
  const MlpOutput out = mlp_forward(params, observation.reshaped({1, observation.size()}));
  Acted a;
  a.output.action = sample_rows(out.logits, rng)[0];
  a.output.policy_logits =
      out.logits.astype(DType::kFloat32).reshaped({params.num_actions()});
  a.output.baseline = static_cast<float>(out.baseline.get(0));
  a.version = params.version;
  return a;
}

}  // namespace

IndexLedger::IndexLedger(std::int64_t num_buffers, std::int64_t max_actor_owned,
                         std::int64_t max_learner_owned)
    : states_(static_cast<std::size_t>(num_buffers), State::kFree),
      max_actor_owned_(max_actor_owned),
      max_learner_owned_(max_learner_owned) {}

void IndexLedger::move_locked(std::int64_t index, State from, State to) {
  if (index < 0 || index >= num_buffers()) {
    ++violations_;
    log_error("buffer index " + std::to_string(index) + " out of range");
    return;
  }
  State& s = states_[static_cast<std::size_t>(index)];
  if (s != from) {
    ++violations_;
    log_error("buffer index " + std::to_string(index) + " moved " + state_name(from) + " -> " +
              state_name(to) + " but was " + state_name(s));
  }
  s = to;
}

void IndexLedger::take_free(std::int64_t index) {
  std::lock_guard lock(mu_);
  move_locked(index, State::kFree, State::kActor);
}

void IndexLedger::fill(std::int64_t index) {
  std::lock_guard lock(mu_);
  move_locked(index, State::kActor, State::kFull);
}

void IndexLedger::take_full(std::int64_t index) {
  std::lock_guard lock(mu_);
  move_locked(index, State::kFull, State::kLearner);
}

void IndexLedger::release(std::int64_t index) {
  std::lock_guard lock(mu_);
  move_locked(index, State::kLearner, State::kFree);
  ++trips_;
}

void IndexLedger::abandon(std::int64_t index, State from) {
  std::lock_guard lock(mu_);
  move_locked(index, from, State::kFree);
  abandoned_.push_back(index);
}

bool IndexLedger::audit() {
  std::lock_guard lock(mu_);
  std::int64_t counts[4] = {0, 0, 0, 0};
  for (State s : states_) ++counts[static_cast<int>(s)];
  const std::int64_t total = counts[0] + counts[1] + counts[2] + counts[3];
  bool ok = total == num_buffers();
  if (max_actor_owned_ >= 0 && counts[static_cast<int>(State::kActor)] > max_actor_owned_) ok = false;
  if (max_learner_owned_ >= 0 && counts[static_cast<int>(State::kLearner)] > max_learner_owned_) {
    ok = false;
  }
  if (!ok) {
    ++violations_;
    log_error("buffer audit failed: free=" + std::to_string(counts[0]) +
              " actor=" + std::to_string(counts[1]) + " full=" + std::to_string(counts[2]) +
              " learner=" + std::to_string(counts[3]));
  }
  ++audits_;
  return ok;
}

std::int64_t IndexLedger::violations() const {
  std::lock_guard lock(mu_);
  return violations_;
}

std::int64_t IndexLedger::trips() const {
  std::lock_guard lock(mu_);
  return trips_;
}

std::int64_t IndexLedger::audits() const {
  std::lock_guard lock(mu_);
  return audits_;
}

std::vector<IndexLedger::State> IndexLedger::states() const {
  std::lock_guard lock(mu_);
  return states_;
}

bool IndexLedger::reconcile(const std::vector<std::int64_t>& free_indices,
                            const std::vector<std::int64_t>& full_indices) {
  std::lock_guard lock(mu_);
  std::vector<int> seen(states_.size(), 0);
  bool ok = true;
  auto mark = [&](std::int64_t i, State expected) {
    if (i < 0 || i >= num_buffers()) {
      ok = false;
      return;
    }
    ++seen[static_cast<std::size_t>(i)];
    if (states_[static_cast<std::size_t>(i)] != expected) ok = false;
  };
  for (auto i : free_indices) mark(i, State::kFree);
  for (auto i : abandoned_) mark(i, State::kFree);
  for (auto i : full_indices) mark(i, State::kFull);
  for (int c : seen) {
    if (c != 1) ok = false;
  }
  if (!ok) {
    ++violations_;
    log_error("buffer indices not conserved at shutdown");
  }
  return ok;
}

MonoResult run_mono(const TrainConfig& cfg, const EnvFactory& factory,
                    Learner::Callback on_metrics, std::optional<ModelParams> initial) {
  cfg.validate_mono();
  const auto t0 = std::chrono::steady_clock::now();
  const auto num_buffers = cfg.resolved_num_buffers();
  const auto T = cfg.unroll_length;
  const auto B = cfg.batch_size;

  MonoResult result;
  result.spec = factory()->spec();
  const auto obs_dim = num_elements(result.spec.obs.dims);
  ModelParams params = initial ? std::move(*initial)
                               : ModelParams::init(obs_dim, cfg.hidden_size,
                                                   result.spec.num_actions, cfg.seed);
  if (params.obs_dim() != obs_dim || params.num_actions() != result.spec.num_actions) {
    throw ConfigError("initial parameters do not match the environment");
  }
  const std::int64_t base_version = params.version;
  RmsPropState opt =
      RmsPropState::for_params(params, cfg.learning_rate, cfg.alpha, cfg.epsilon);
  ModelStore store(std::move(params), std::move(opt));
  Learner learner(store, cfg, std::move(on_metrics));

  std::vector<Rollout> buffers;
  buffers.reserve(static_cast<std::size_t>(num_buffers));
  for (std::int64_t i = 0; i < num_buffers; ++i) {
    buffers.emplace_back(T, result.spec.obs, result.spec.num_actions);
  }
  BatchingQueue<std::int64_t> free_queue(1, num_buffers);
  BatchingQueue<std::int64_t> full_queue(B, num_buffers);
  IndexLedger ledger(num_buffers, cfg.num_actors, cfg.num_learner_threads * B);
  for (std::int64_t i = 0; i < num_buffers; ++i) free_queue.enqueue(i);

  const bool lockstep = cfg.num_actors == 1 && cfg.num_learner_threads == 1;
  std::atomic<std::uint64_t> next_id{1};
  std::atomic<std::int64_t> produced{0};

  std::mutex err_mu;
  std::exception_ptr first_error;
  auto stop_all = [&] {
    free_queue.close();
    full_queue.close();
    store.interrupt();
  };
  auto fail = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(err_mu);
      if (!first_error) first_error = e;
    }
    stop_all();
  };

  auto actor = [&](std::int64_t index) {
    try {
      EpisodeAccounting env(factory());
      std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(index));
      EnvOutput out = env.initial();
      std::optional<Acted> carried;
      for (std::int64_t r = 0;; ++r) {
        auto got = free_queue.next_batch();
        if (!got) break;
        const std::int64_t idx = got->front();
        ledger.take_free(idx);

        std::shared_ptr<const ModelParams> pinned;
        if (lockstep) {
          if (!store.wait_for_version(base_version + r / B)) {
            ledger.abandon(idx, IndexLedger::State::kActor);
            break;
          }
          pinned = store.snapshot();
        }
        auto current = [&] { return pinned ? pinned : store.snapshot(); };

        Rollout& buf = buffers[static_cast<std::size_t>(idx)];
        if (!carried) carried = act(*current(), out.observation, rng);
        std::int64_t min_version = carried->version;
        buf.set_row(0, out, carried->output);
        for (std::int64_t t = 1; t <= T; ++t) {
          out = env.step(carried->output.action);
          carried = act(*current(), out.observation, rng);
          min_version = std::min(min_version, carried->version);
          buf.set_row(t, out, carried->output);
        }
        buf.model_version = min_version;
        buf.id = next_id.fetch_add(1);

        ledger.fill(idx);
        try {
          full_queue.enqueue(idx);
        } catch (const ClosedError&) {
          ledger.abandon(idx, IndexLedger::State::kFull);
          break;
        }
        produced.fetch_add(1);
        ledger.audit();
      }
    } catch (...) {
      fail(std::current_exception());
    }
  };

  auto learner_thread = [&] {
    try {
      while (!learner.done()) {
        auto got = full_queue.next_batch();
        if (!got) break;
        std::vector<Rollout> batch;
        batch.reserve(got->size());
        for (auto idx : *got) {
          ledger.take_full(idx);
          batch.push_back(buffers[static_cast<std::size_t>(idx)]);
        }
        for (auto idx : *got) {
          ledger.release(idx);
          try {
            free_queue.enqueue(idx);
          } catch (const ClosedError&) {
            ledger.abandon(idx, IndexLedger::State::kFree);
          }
        }
        ledger.audit();
        if (!learner.step(batch)) break;
      }
      stop_all();
    } catch (...) {
      fail(std::current_exception());
    }
  };

  std::vector<std::thread> threads;
  for (std::int64_t i = 0; i < cfg.num_actors; ++i) threads.emplace_back(actor, i);
  for (std::int64_t i = 0; i < cfg.num_learner_threads; ++i) threads.emplace_back(learner_thread);
  for (auto& t : threads) t.join();

  if (first_error) {
    log_error("mono run aborted; buffer states at abort:");
    const auto states = ledger.states();
    for (std::size_t i = 0; i < states.size(); ++i) {
      log_error("  buffer " + std::to_string(i) + ": " + state_name(states[i]));
    }
    std::rethrow_exception(first_error);
  }

  result.conserved = ledger.reconcile(free_queue.take_residual(), full_queue.take_residual());
  result.last = learner.last();
  result.max_staleness = learner.max_staleness();
  result.rollouts_produced = produced.load();
  result.rollouts_consumed = learner.rollouts_consumed();
  result.index_violations = ledger.violations();
  result.index_trips = ledger.trips();
  result.audits = ledger.audits();
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  learner.write_final_checkpoint();
  return result;
}

}  // namespace beastpipe
