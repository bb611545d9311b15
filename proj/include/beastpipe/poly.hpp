#ifndef BEASTPIPE_POLY_HPP_
#define BEASTPIPE_POLY_HPP_

#include <cstdint>
#include <optional>

#include "beastpipe/actor_pool.hpp"
#include "beastpipe/config.hpp"
#include "beastpipe/learner.hpp"

namespace beastpipe {

struct PolyResult {
  MetricsRecord last;
  EnvSpec spec;
  std::int64_t max_staleness = 0;
  std::int64_t rollouts_consumed = 0;
  std::int64_t rollouts_dropped = 0;  // still queued at shutdown
  ActorPool::Stats actors;
  double seconds = 0.0;
};

// Networked runtime: actor threads talk to environment servers, one or more
// inference threads serve a DynamicBatcher, and the calling thread runs the
// learner until total_steps frames are consumed. Throws ConnectError when
// no server can be reached, ConfigError for invalid settings.
// `initial` replaces the random initial parameters when given.
PolyResult run_poly(const TrainConfig& cfg, Learner::Callback on_metrics = {},
                    std::optional<ModelParams> initial = std::nullopt);

}  // namespace beastpipe

#endif  // BEASTPIPE_POLY_HPP_
