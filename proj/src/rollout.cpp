#include "beastpipe/rollout.hpp"

#include <cmath>

namespace beastpipe {

Rollout::Rollout(std::int64_t unroll_length, const ObsSpec& obs, std::int64_t num_actions) {
  if (unroll_length < 1) throw DimensionError("unroll_length must be >= 1");
  if (num_actions < 1) throw DimensionError("num_actions must be >= 1");
  const std::int64_t rows = unroll_length + 1;
  Shape obs_dims{rows};
  obs_dims.insert(obs_dims.end(), obs.dims.begin(), obs.dims.end());
  observation = NDArray(obs.dtype, obs_dims);
  reward = NDArray(DType::kFloat32, {rows});
  done = NDArray(DType::kUInt8, {rows});
  episode_step = NDArray(DType::kInt64, {rows});
  episode_return = NDArray(DType::kFloat32, {rows});
  policy_logits = NDArray(DType::kFloat32, {rows, num_actions});
  baseline = NDArray(DType::kFloat32, {rows});
  action = NDArray(DType::kInt64, {rows});
}

ObsSpec Rollout::obs_spec() const {
  return ObsSpec{observation.dtype(), Shape(observation.dims().begin() + 1, observation.dims().end())};
}

void Rollout::set_row(std::int64_t t, const EnvOutput& env, const AgentOutput& agent) {
  assign_at(observation, 0, t, env.observation);
  reward.values<float>()[t] = env.reward;
  done.values<std::uint8_t>()[t] = env.done ? 1 : 0;
  episode_step.values<std::int64_t>()[t] = env.episode_step;
  episode_return.values<float>()[t] = env.episode_return;
  assign_at(policy_logits, 0, t, agent.policy_logits);
  baseline.values<float>()[t] = agent.baseline;
  action.values<std::int64_t>()[t] = agent.action;
}

EnvOutput Rollout::env_row(std::int64_t t) const {
  EnvOutput out;
  const auto obs = obs_spec();
  out.observation = observation.slice(0, t, 1).reshaped(obs.dims);
  out.reward = reward.values<float>()[t];
  out.done = done.values<std::uint8_t>()[t] != 0;
  out.episode_step = episode_step.values<std::int64_t>()[t];
  out.episode_return = episode_return.values<float>()[t];
  return out;
}

AgentOutput Rollout::agent_row(std::int64_t t) const {
  AgentOutput out;
  out.action = action.values<std::int64_t>()[t];
  out.policy_logits = policy_logits.slice(0, t, 1).reshaped({num_actions()});
  out.baseline = baseline.values<float>()[t];
  return out;
}

TrainingBatch stack_rollouts(std::span<const Rollout> rollouts, std::int64_t batch_dim) {
  if (batch_dim != 1) throw SchemaError("batch_dim", "only batch_dim = 1 is supported");
  if (rollouts.empty()) throw SchemaError("rollouts", "need at least one rollout");
  const Rollout& first = rollouts.front();
  const auto spec = first.obs_spec();
  for (const auto& r : rollouts) {
    if (r.rows() != first.rows()) {
      throw SchemaError("reward", "rollouts have different unroll lengths (" +
                                      std::to_string(first.unroll_length()) + " vs " +
                                      std::to_string(r.unroll_length()) + ")");
    }
    if (r.obs_spec() != spec) {
      throw SchemaError("observation", "heterogeneous observation spec " +
                                           shape_str(spec.dims) + " vs " +
                                           shape_str(r.obs_spec().dims));
    }
    if (r.num_actions() != first.num_actions()) {
      throw SchemaError("policy_logits", "rollouts disagree on num_actions");
    }
  }
  auto column = [&](NDArray Rollout::*field) {
    std::vector<NDArray> parts;
    parts.reserve(rollouts.size());
    for (const auto& r : rollouts) parts.push_back(r.*field);
    return stack(parts, batch_dim);
  };
  TrainingBatch b;
  b.observation = column(&Rollout::observation);
  b.reward = column(&Rollout::reward);
  b.done = column(&Rollout::done);
  b.policy_logits = column(&Rollout::policy_logits);
  b.baseline = column(&Rollout::baseline);
  b.action = column(&Rollout::action);
  for (const auto& r : rollouts) b.model_versions.push_back(r.model_version);
  return b;
}

Rollout slice_batch(const TrainingBatch& batch, std::int64_t index) {
  auto take = [&](const NDArray& a) {
    NDArray s = a.slice(1, index, 1);
    Shape dims = s.dims();
    dims.erase(dims.begin() + 1);
    return s.reshaped(std::move(dims));
  };
  Rollout r;
  r.observation = take(batch.observation);
  r.reward = take(batch.reward);
  r.done = take(batch.done);
  r.policy_logits = take(batch.policy_logits);
  r.baseline = take(batch.baseline);
  r.action = take(batch.action);
  r.episode_step = NDArray(DType::kInt64, {r.reward.dim(0)});
  r.episode_return = NDArray(DType::kFloat32, {r.reward.dim(0)});
  r.model_version = batch.model_versions.at(static_cast<std::size_t>(index));
  return r;
}

namespace {

void expect_dims(const char* field, const NDArray& a, DType dtype, const Shape& prefix,
                 std::int64_t extra_rank = 0) {
  if (a.dtype() != dtype) {
    throw SchemaError(field, std::string("dtype ") + dtype_name(a.dtype()) + ", expected " +
                                 dtype_name(dtype));
  }
  const bool rank_ok = a.ndim() == static_cast<std::int64_t>(prefix.size()) + extra_rank ||
                       (extra_rank < 0 && a.ndim() >= static_cast<std::int64_t>(prefix.size()));
  bool prefix_ok = a.ndim() >= static_cast<std::int64_t>(prefix.size());
  for (std::size_t i = 0; prefix_ok && i < prefix.size(); ++i) {
    prefix_ok = a.dims()[i] == prefix[i];
  }
  if (!rank_ok || !prefix_ok) {
    throw SchemaError(field, "dims " + shape_str(a.dims()) + " do not match leading " +
                                 shape_str(prefix));
  }
}

}  // namespace

void validate_batch(const TrainingBatch& batch, const BatchExpectations& expect) {
  if (batch.reward.ndim() != 2) {
    throw SchemaError("reward", "dims " + shape_str(batch.reward.dims()) + " are not [T+1, B]");
  }
  const Shape lead = batch.reward.dims();
  if (lead[0] < 2) throw SchemaError("reward", "need at least T+1 = 2 rows");
  if (expect.batch_size >= 0 && lead[1] != expect.batch_size) {
    throw SchemaError("reward", "batch axis " + std::to_string(lead[1]) + " != configured " +
                                    std::to_string(expect.batch_size));
  }
  expect_dims("reward", batch.reward, DType::kFloat32, lead);
  // Observations may carry any dtype the environment advertises.
  expect_dims("observation", batch.observation, batch.observation.dtype(), lead, -1);
  expect_dims("done", batch.done, DType::kUInt8, lead);
  expect_dims("policy_logits", batch.policy_logits, DType::kFloat32, lead, 1);
  expect_dims("baseline", batch.baseline, DType::kFloat32, lead);
  expect_dims("action", batch.action, DType::kInt64, lead);
  if (static_cast<std::int64_t>(batch.model_versions.size()) != lead[1]) {
    throw SchemaError("model_versions", "length " + std::to_string(batch.model_versions.size()) +
                                            " != batch size " + std::to_string(lead[1]));
  }
  const std::int64_t num_actions = batch.policy_logits.dim(2);
  if (num_actions < 1) throw SchemaError("policy_logits", "num_actions must be >= 1");
  if (expect.num_actions >= 0 && num_actions != expect.num_actions) {
    throw SchemaError("policy_logits", "num_actions " + std::to_string(num_actions) +
                                           " != expected " + std::to_string(expect.num_actions));
  }
  for (auto a : batch.action.values<std::int64_t>()) {
    if (a < 0 || a >= num_actions) {
      throw SchemaError("action", "value " + std::to_string(a) + " outside [0, " +
                                      std::to_string(num_actions) + ")");
    }
  }
  for (auto d : batch.done.values<std::uint8_t>()) {
    if (d > 1) throw SchemaError("done", "value " + std::to_string(d) + " is not 0/1");
  }
  if (!batch.reward.all_finite()) throw SchemaError("reward", "non-finite value");
  if (!batch.policy_logits.all_finite()) throw SchemaError("policy_logits", "non-finite value");
  if (!batch.baseline.all_finite()) throw SchemaError("baseline", "non-finite value");
}

}  // namespace beastpipe
