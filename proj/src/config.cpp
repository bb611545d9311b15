#include "beastpipe/config.hpp"

#include <algorithm>

namespace beastpipe {

std::int64_t TrainConfig::resolved_num_buffers() const {
  if (num_buffers > 0) return num_buffers;
  return std::max(2 * batch_size, num_actors + 1);
}

void TrainConfig::validate_common() const {
  if (unroll_length < 1) throw ConfigError("unroll_length must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (num_actors < 1) throw ConfigError("num_actors must be >= 1");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  vtrace.validate();
}

void TrainConfig::validate_mono() const {
  validate_common();
  const auto n = resolved_num_buffers();
  if (n < 2 * batch_size) throw ConfigError("num_buffers must be >= 2*batch_size");
  if (n <= num_actors) throw ConfigError("num_buffers must be > num_actors");
  if (num_learner_threads < 1) throw ConfigError("num_learner_threads must be >= 1");
}

void TrainConfig::validate_poly() const {
  validate_common();
  if (server_addresses.empty()) throw ConfigError("server_addresses must not be empty");
  if (num_inference_threads < 1) throw ConfigError("num_inference_threads must be >= 1");
  if (max_inference_batch < 0) throw ConfigError("max_inference_batch must be >= 0");
  if (min_inference_batch < 1) throw ConfigError("min_inference_batch must be >= 1");
  if (connect_retries < 0) throw ConfigError("connect_retries must be >= 0");
}

}  // namespace beastpipe
