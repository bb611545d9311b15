#include "beastpipe/vtrace.hpp"

#include <algorithm>
#include <cmath>

#include "beastpipe/model.hpp"

namespace beastpipe {

void VtraceConfig::validate() const {
  if (!(discount > 0.0 && discount <= 1.0)) {
    throw ConfigError("discounting must lie in (0, 1], got " + std::to_string(discount));
  }
  if (!(c_bar > 0.0)) throw ConfigError("c_bar must be > 0");
  if (!(rho_bar >= c_bar)) throw ConfigError("rho_bar must be >= c_bar");
  if (baseline_cost < 0.0 || entropy_cost < 0.0 || pg_cost < 0.0) {
    throw ConfigError("loss costs must be non-negative");
  }
}

NDArray action_log_rhos(const NDArray& behavior_logits, const NDArray& target_logits,
                        const NDArray& actions) {
  if (behavior_logits.dims() != target_logits.dims() || target_logits.ndim() != 3) {
    throw DimensionError("logits must both be [T, B, A]; got " +
                         shape_str(behavior_logits.dims()) + " and " +
                         shape_str(target_logits.dims()));
  }
  const Shape tb{target_logits.dim(0), target_logits.dim(1)};
  if (actions.dims() != tb) {
    throw DimensionError("actions must be " + shape_str(tb) + ", got " + shape_str(actions.dims()));
  }
  const auto a = target_logits.dim(2);
  const NDArray target_lp = log_softmax(target_logits);
  const NDArray behavior_lp = log_softmax(behavior_logits.astype(target_logits.dtype()));
  NDArray out(target_logits.dtype(), tb);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const auto act = static_cast<std::int64_t>(actions.get(i));
    if (act < 0 || act >= a) {
      throw DimensionError("action " + std::to_string(act) + " outside [0, " +
                           std::to_string(a) + ")");
    }
    out.set(i, target_lp.get(i * a + act) - behavior_lp.get(i * a + act));
  }
  return out;
}

namespace {

template <typename T>
VtraceResult vtrace_impl(const NDArray& log_rhos_in, const NDArray& discounts_in,
                         const NDArray& rewards_in, const NDArray& values_in,
                         const NDArray& bootstrap_in, const VtraceConfig& cfg) {
  constexpr DType kD = dtype_of<T>();
  const NDArray log_rhos = log_rhos_in.astype(kD);
  const NDArray discounts = discounts_in.astype(kD);
  const NDArray rewards = rewards_in.astype(kD);
  const NDArray values = values_in.astype(kD);
  const NDArray bootstrap = bootstrap_in.astype(kD);
  const auto steps = values.dim(0);
  const auto batch = values.dim(1);

  VtraceResult res{NDArray(kD, values.dims()), NDArray(kD, values.dims()),
                   NDArray(kD, values.dims())};
  const auto lr = log_rhos.values<T>();
  const auto disc = discounts.values<T>();
  const auto rew = rewards.values<T>();
  const auto val = values.values<T>();
  const auto boot = bootstrap.values<T>();
  auto vs = res.vs.values<T>();
  auto adv = res.pg_advantages.values<T>();
  auto rhos = res.clipped_rhos.values<T>();
  const T rho_bar = static_cast<T>(cfg.rho_bar);
  const T c_bar = static_cast<T>(cfg.c_bar);

  for (std::int64_t b = 0; b < batch; ++b) {
    // acc holds v_{t+1} - V(x_{t+1}); zero at the bootstrap row.
    T acc = 0;
    for (std::int64_t t = steps - 1; t >= 0; --t) {
      const std::int64_t i = t * batch + b;
      const T rho = std::exp(lr[i]);
      const T clipped_rho = std::min(rho_bar, rho);
      const T c = std::min(c_bar, rho);
      const T next_value = t + 1 < steps ? val[i + batch] : boot[b];
      const T delta = clipped_rho * (rew[i] + disc[i] * next_value - val[i]);
      acc = delta + disc[i] * c * acc;
      vs[i] = val[i] + acc;
      rhos[i] = clipped_rho;
    }
    for (std::int64_t t = 0; t < steps; ++t) {
      const std::int64_t i = t * batch + b;
      const T vs_next = t + 1 < steps ? vs[i + batch] : boot[b];
      adv[i] = rhos[i] * (rew[i] + disc[i] * vs_next - val[i]);
    }
  }
  return res;
}

void check_vtrace_inputs(const NDArray& log_rhos, const NDArray& discounts,
                         const NDArray& rewards, const NDArray& values,
                         const NDArray& bootstrap_value, const VtraceConfig& cfg) {
  if (values.ndim() != 2) throw DimensionError("values must be [T, B], got " + shape_str(values.dims()));
  for (const auto* a : {&log_rhos, &discounts, &rewards}) {
    if (a->dims() != values.dims()) {
      throw DimensionError("vtrace input " + shape_str(a->dims()) + " does not match values " +
                           shape_str(values.dims()));
    }
  }
  if (bootstrap_value.dims() != Shape{values.dim(1)}) {
    throw DimensionError("bootstrap_value must be [B], got " + shape_str(bootstrap_value.dims()));
  }
  for (const auto* a : {&log_rhos, &discounts, &rewards, &values, &bootstrap_value}) {
    if (!a->all_finite()) throw NonFiniteError("non-finite vtrace input");
  }
  const double hi = cfg.discount * (1.0 + 1e-6);
  for (std::int64_t i = 0; i < discounts.size(); ++i) {
    const double d = discounts.get(i);
    if (d < 0.0 || d > hi) {
      throw DimensionError("discount " + std::to_string(d) + " outside [0, " +
                           std::to_string(cfg.discount) + "]");
    }
  }
}

}  // namespace

VtraceResult vtrace_targets(const NDArray& log_rhos, const NDArray& discounts,
                            const NDArray& rewards, const NDArray& values,
                            const NDArray& bootstrap_value, const VtraceConfig& cfg) {
  cfg.validate();
  check_vtrace_inputs(log_rhos, discounts, rewards, values, bootstrap_value, cfg);
  const DType dtype = values.dtype() == DType::kFloat64 ? DType::kFloat64 : DType::kFloat32;
  return visit_floating(dtype, [&]<typename T>(T) {
    return vtrace_impl<T>(log_rhos, discounts, rewards, values, bootstrap_value, cfg);
  });
}

namespace {

template <typename T>
LossOutput losses_impl(const TrainingBatch& batch, const NDArray& logits_all,
                       const NDArray& baseline_all, const VtraceConfig& cfg) {
  constexpr DType kD = dtype_of<T>();
  const auto steps = batch.unroll_length();
  const auto nb = batch.batch_size();
  const auto na = batch.num_actions();

  const NDArray logits = logits_all.slice(0, 0, steps);
  const NDArray values = baseline_all.slice(0, 0, steps);
  const NDArray bootstrap = baseline_all.slice(0, steps, 1).reshaped({nb});
  const NDArray behavior = batch.policy_logits.slice(0, 0, steps);
  const NDArray actions = batch.action.slice(0, 0, steps);
  const NDArray rewards = batch.reward.slice(0, 1, steps).astype(kD);
  const NDArray next_done = batch.done.slice(0, 1, steps);
  NDArray discounts(kD, {steps, nb});
  {
    auto d = discounts.values<T>();
    const auto nd = next_done.values<std::uint8_t>();
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = nd[i] ? T(0) : static_cast<T>(cfg.discount);
    }
  }

  const NDArray log_rhos = action_log_rhos(behavior, logits, actions);
  LossOutput out;
  out.vtrace = vtrace_targets(log_rhos, discounts, rewards, values, bootstrap, cfg);

  const NDArray logp = log_softmax(logits);
  const auto lp = logp.values<T>();
  const auto adv = out.vtrace.pg_advantages.values<T>();
  const auto vs = out.vtrace.vs.values<T>();
  const auto v = values.values<T>();
  const auto act = actions.values<std::int64_t>();

  out.logits_grad = NDArray(kD, {steps + 1, nb, na});
  out.baseline_grad = NDArray(kD, {steps + 1, nb});
  auto gl = out.logits_grad.values<T>();
  auto gb = out.baseline_grad.values<T>();
  const T pg_cost = static_cast<T>(cfg.pg_cost);
  const T baseline_cost = static_cast<T>(cfg.baseline_cost);
  const T entropy_cost = static_cast<T>(cfg.entropy_cost);

  T pg = 0, bl = 0, ent = 0;
  for (std::int64_t i = 0; i < steps * nb; ++i) {
    const T* row = lp.data() + i * na;
    T h = 0;
    for (std::int64_t k = 0; k < na; ++k) h -= std::exp(row[k]) * row[k];
    pg -= adv[i] * row[act[i]];
    const T err = vs[i] - v[i];
    bl += T(0.5) * err * err;
    ent -= h;

    // d(-adv log p_a)/dz_k = -adv (1[k=a] - p_k)
    // d(-H)/dz_k           = p_k (log p_k + H)
    T* g = gl.data() + i * na;
    for (std::int64_t k = 0; k < na; ++k) {
      const T p = std::exp(row[k]);
      const T onehot = k == act[i] ? T(1) : T(0);
      g[k] = pg_cost * (-adv[i] * (onehot - p)) + entropy_cost * (p * (row[k] + h));
    }
    gb[i] = baseline_cost * (v[i] - vs[i]);
  }

  out.losses.pg_loss = pg;
  out.losses.baseline_loss = bl;
  out.losses.entropy_loss = ent;
  out.losses.total = cfg.pg_cost * out.losses.pg_loss +
                     cfg.baseline_cost * out.losses.baseline_loss +
                     cfg.entropy_cost * out.losses.entropy_loss;
  if (!std::isfinite(out.losses.total)) throw NonFiniteError("non-finite loss");
  return out;
}

}  // namespace

LossOutput compute_losses(const TrainingBatch& batch, const NDArray& learner_logits,
                          const NDArray& learner_baseline, const VtraceConfig& cfg) {
  cfg.validate();
  const auto steps = batch.unroll_length();
  const auto nb = batch.batch_size();
  const auto na = batch.num_actions();
  if (learner_logits.ndim() != 3 || learner_logits.dim(1) != nb || learner_logits.dim(2) != na ||
      (learner_logits.dim(0) != steps && learner_logits.dim(0) != steps + 1)) {
    throw DimensionError("learner logits must be [T or T+1, B, A] = [" + std::to_string(steps) +
                         ", " + std::to_string(nb) + ", " + std::to_string(na) + "], got " +
                         shape_str(learner_logits.dims()));
  }
  if (learner_baseline.dims() != Shape{steps + 1, nb}) {
    throw DimensionError("learner baseline must be [T+1, B], got " +
                         shape_str(learner_baseline.dims()));
  }
  if (learner_logits.dtype() != learner_baseline.dtype()) {
    throw DimensionError("learner logits and baseline dtypes differ");
  }
  return visit_floating(learner_logits.dtype(), [&]<typename T>(T) {
    return losses_impl<T>(batch, learner_logits, learner_baseline, cfg);
  });
}

}  // namespace beastpipe
