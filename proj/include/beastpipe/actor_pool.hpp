#ifndef BEASTPIPE_ACTOR_POOL_HPP_
#define BEASTPIPE_ACTOR_POOL_HPP_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "beastpipe/batching_queue.hpp"
#include "beastpipe/dynamic_batcher.hpp"
#include "beastpipe/env.hpp"
#include "beastpipe/model_store.hpp"
#include "beastpipe/net.hpp"
#include "beastpipe/rollout.hpp"

namespace beastpipe {

// Answers inference batches until the batcher closes. Inputs carry
// "observation" [1, n, *obs]; outputs are "action" [1, n] i64,
// "policy_logits" [1, n, A] f32, "baseline" [1, n] f32 and
// "version" [1, n] i64 (parameter version used).
void inference_loop(const ModelStore& store, DynamicBatcher& batcher, std::uint64_t seed,
                    bool greedy = false);

// Builds the per-step request an actor submits to the batcher.
ArrayMap make_inference_request(const EnvOutput& env);

struct AgentReply {
  AgentOutput output;
  std::int64_t version = 0;
};

AgentReply parse_inference_reply(const ArrayMap& reply);

// Connects, retrying with exponential backoff; throws ConnectError after
// `retries` failed attempts.
Socket connect_with_retry(const HostPort& addr, std::int64_t retries,
                          const std::atomic<bool>* stopping = nullptr);

// Reads HELLO from a fresh connection and returns the advertised spec.
EnvSpec read_hello(FrameChannel& ch);

// Connects once to learn an environment's spec, then says BYE.
EnvSpec probe_env_spec(const HostPort& addr, std::int64_t retries);

// Actor threads of the networked runtime. Actor i talks to
// addresses[i % addresses.size()], submits every observation to the
// inference batcher, and enqueues a Rollout of unroll_length + 1 rows each
// time it has taken unroll_length actions; the last row of a rollout is
// the first row of the next. A lost connection discards the partial
// rollout and reconnects.
class ActorPool {
 public:
  struct Stats {
    std::int64_t rollouts = 0;
    std::int64_t frames = 0;
    std::int64_t reconnects = 0;
    std::int64_t discarded_partials = 0;
    std::int64_t failed_actors = 0;
  };

  ActorPool(std::int64_t num_actors, std::int64_t unroll_length, std::vector<HostPort> addresses,
            EnvSpec expected_spec, BatchingQueue<Rollout>& learner_queue,
            DynamicBatcher& inference, std::int64_t connect_retries = 8);
  ~ActorPool();

  void start();
  // Closes actor sockets and joins. The queues are left to the caller.
  void stop();

  // True once every actor has exited because its server stayed unreachable.
  bool all_failed() const;
  Stats stats() const;

 private:
  void run_actor(std::int64_t index);
  void session(std::int64_t index, Socket& sock);
  void register_socket(std::int64_t index, int fd);

  const std::int64_t num_actors_;
  const std::int64_t unroll_length_;
  const std::vector<HostPort> addresses_;
  const EnvSpec spec_;
  BatchingQueue<Rollout>& learner_queue_;
  DynamicBatcher& inference_;
  const std::int64_t connect_retries_;

  std::vector<std::thread> threads_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> next_rollout_id_{1};

  mutable std::mutex mu_;
  std::vector<int> fds_;
  Stats stats_;
};

}  // namespace beastpipe

#endif  // BEASTPIPE_ACTOR_POOL_HPP_
