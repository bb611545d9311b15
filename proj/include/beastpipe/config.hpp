#ifndef BEASTPIPE_CONFIG_HPP_
#define BEASTPIPE_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "beastpipe/net.hpp"
#include "beastpipe/vtrace.hpp"

namespace beastpipe {

struct TrainConfig {
  std::int64_t unroll_length = 20;
  std::int64_t batch_size = 8;
  std::int64_t num_actors = 4;
  std::int64_t total_steps = 500000;  // environment frames consumed by the learner
  std::int64_t hidden_size = 128;
  std::uint64_t seed = 1;

  double learning_rate = 0.005;
  double alpha = 0.99;
  double epsilon = 0.01;
  double grad_norm_clipping = 40.0;
  VtraceConfig vtrace;

  // mono
  std::int64_t num_buffers = 0;  // 0: max(2 * batch_size, num_actors + 1)
  std::int64_t num_learner_threads = 1;

  // poly
  std::vector<HostPort> server_addresses;
  std::int64_t num_inference_threads = 1;
  std::int64_t max_inference_batch = 0;  // 0: num_actors
  std::int64_t min_inference_batch = 1;
  std::int64_t inference_timeout_us = 0;
  std::int64_t connect_retries = 8;

  std::filesystem::path logdir;       // empty: no files written
  std::int64_t checkpoint_every = 0;  // learner steps; 0: final checkpoint only

  std::int64_t frames_per_step() const { return unroll_length * batch_size; }
  std::int64_t resolved_num_buffers() const;

  // Throw ConfigError naming the violated rule.
  void validate_common() const;
  void validate_mono() const;
  void validate_poly() const;
};

}  // namespace beastpipe

#endif  // BEASTPIPE_CONFIG_HPP_
