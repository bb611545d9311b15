#ifndef BEASTPIPE_VTRACE_HPP_
#define BEASTPIPE_VTRACE_HPP_

#include "beastpipe/ndarray.hpp"
#include "beastpipe/rollout.hpp"

namespace beastpipe {

struct VtraceConfig {
  double discount = 0.99;
  double rho_bar = 1.0;  // clips importance weights in deltas and pg advantages
  double c_bar = 1.0;    // clips trace-cutting coefficients
  double pg_cost = 1.0;
  double baseline_cost = 0.5;
  double entropy_cost = 0.01;

  // Throws ConfigError unless 0 < discount <= 1 and rho_bar >= c_bar > 0.
  void validate() const;
};

struct VtraceResult {
  NDArray vs;             // [T, B] value targets
  NDArray pg_advantages;  // [T, B]
  NDArray clipped_rhos;   // [T, B]
};

// log pi_target(a|x) - log pi_behavior(a|x) for [T, B, A] logits and [T, B]
// actions. The result takes the target logits' dtype.
NDArray action_log_rhos(const NDArray& behavior_logits, const NDArray& target_logits,
                        const NDArray& actions);

// Backward recursion over time:
//   rho_t   = min(rho_bar, exp(log_rho_t)),  c_t = min(c_bar, exp(log_rho_t))
//   delta_t = rho_t (r_t + gamma_t V_{t+1} - V_t),  V_T = bootstrap
//   v_s     = V_s + delta_s + gamma_s c_s (v_{s+1} - V_{s+1}),  v_T = bootstrap
//   adv_s   = rho_s (r_s + gamma_s v_{s+1} - V_s)
// `discounts` already carries gamma zeroed at episode boundaries.
VtraceResult vtrace_targets(const NDArray& log_rhos, const NDArray& discounts,
                            const NDArray& rewards, const NDArray& values,
                            const NDArray& bootstrap_value, const VtraceConfig& cfg);

// Sum-reduced over T x B.
struct LossBundle {
  double pg_loss = 0.0;
  double baseline_loss = 0.0;
  double entropy_loss = 0.0;
  double total = 0.0;
};

struct LossOutput {
  LossBundle losses;
  NDArray logits_grad;    // d total / d learner_logits, [T+1, B, A]; row T is zero
  NDArray baseline_grad;  // d total / d learner_baseline, [T+1, B]; row T is zero
  VtraceResult vtrace;
};

// learner_logits: [T or T+1, B, A]; learner_baseline: [T+1, B]. Both must
// share a floating dtype, which sets the precision of the whole
// computation. V-trace targets are treated as constants.
LossOutput compute_losses(const TrainingBatch& batch, const NDArray& learner_logits,
                          const NDArray& learner_baseline, const VtraceConfig& cfg);

}  // namespace beastpipe

#endif  // BEASTPIPE_VTRACE_HPP_
