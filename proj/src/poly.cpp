#include "beastpipe/poly.hpp"

#include <chrono>
#include <thread>

#include "beastpipe/log.hpp"

namespace beastpipe {

PolyResult run_poly(const TrainConfig& cfg, Learner::Callback on_metrics,
                    std::optional<ModelParams> initial) {
  cfg.validate_poly();
  const auto t0 = std::chrono::steady_clock::now();

  PolyResult result;
  result.spec = probe_env_spec(cfg.server_addresses.front(), cfg.connect_retries);
  for (std::size_t i = 1; i < cfg.server_addresses.size(); ++i) {
    if (!(probe_env_spec(cfg.server_addresses[i], cfg.connect_retries) == result.spec)) {
      throw ConfigError("server " + cfg.server_addresses[i].str() +
                        " serves a different environment than " +
                        cfg.server_addresses.front().str());
    }
  }
  if (result.spec.obs.dtype != DType::kFloat32 && result.spec.obs.dtype != DType::kUInt8) {
    throw ConfigError("unsupported observation dtype");
  }
  const auto obs_dim = num_elements(result.spec.obs.dims);

  ModelParams params = initial ? std::move(*initial)
                               : ModelParams::init(obs_dim, cfg.hidden_size,
                                                   result.spec.num_actions, cfg.seed);
  if (params.obs_dim() != obs_dim || params.num_actions() != result.spec.num_actions) {
    throw ConfigError("initial parameters do not match the served environment");
  }
  RmsPropState opt =
      RmsPropState::for_params(params, cfg.learning_rate, cfg.alpha, cfg.epsilon);
  ModelStore store(std::move(params), std::move(opt));

  const auto max_batch = cfg.max_inference_batch > 0 ? cfg.max_inference_batch : cfg.num_actors;
  DynamicBatcher batcher(max_batch, cfg.min_inference_batch,
                         std::chrono::microseconds(cfg.inference_timeout_us));
  BatchingQueue<Rollout> queue(cfg.batch_size);
  Learner learner(store, cfg, std::move(on_metrics));

  std::vector<std::thread> inference;
  for (std::int64_t i = 0; i < cfg.num_inference_threads; ++i) {
    inference.emplace_back([&, i] {
      try {
        inference_loop(store, batcher, cfg.seed + static_cast<std::uint64_t>(i));
      } catch (const std::exception& e) {
        log_error(std::string("inference thread failed: ") + e.what());
        batcher.close();
        queue.close();
      }
    });
  }
  ActorPool pool(cfg.num_actors, cfg.unroll_length, cfg.server_addresses, result.spec, queue,
                 batcher, cfg.connect_retries);

  auto shutdown = [&] {
    queue.close();
    batcher.close();
    pool.stop();
    for (auto& t : inference) {
      if (t.joinable()) t.join();
    }
  };

  try {
    pool.start();
    result.last = learner_loop(queue, learner);
  } catch (...) {
    shutdown();
    throw;
  }
  shutdown();

  result.actors = pool.stats();
  result.max_staleness = learner.max_staleness();
  result.rollouts_consumed = learner.rollouts_consumed();
  result.rollouts_dropped = static_cast<std::int64_t>(queue.take_residual().size());
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!learner.done()) {
    if (pool.all_failed()) throw ConnectError("every actor lost its environment server");
    throw Error("training ended before total_steps");
  }
  learner.write_final_checkpoint();
  return result;
}

}  // namespace beastpipe
