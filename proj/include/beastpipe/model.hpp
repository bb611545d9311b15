#ifndef BEASTPIPE_MODEL_HPP_
#define BEASTPIPE_MODEL_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <string_view>

#include "beastpipe/ndarray.hpp"

namespace beastpipe {

// The six tensors of the policy/value network
//   hidden   = relu(W1 x + b1)
//   logits   = Wp hidden + bp
//   baseline = Wv hidden + bv
// All tensors share one floating dtype.
struct ParamTensors {
  NDArray w1;  // [hidden, obs_dim]
  NDArray b1;  // [hidden]
  NDArray wp;  // [num_actions, hidden]
  NDArray bp;  // [num_actions]
  NDArray wv;  // [1, hidden]
  NDArray bv;  // [1]

  static constexpr std::array<std::string_view, 6> kNames = {"W1", "b1", "Wp", "bp", "Wv", "bv"};

  std::array<NDArray*, 6> tensors() { return {&w1, &b1, &wp, &bp, &wv, &bv}; }
  std::array<const NDArray*, 6> tensors() const { return {&w1, &b1, &wp, &bp, &wv, &bv}; }

  std::int64_t obs_dim() const { return w1.dim(1); }
  std::int64_t hidden() const { return w1.dim(0); }
  std::int64_t num_actions() const { return wp.dim(0); }
  DType dtype() const { return w1.dtype(); }

  static ParamTensors zeros(std::int64_t obs_dim, std::int64_t hidden, std::int64_t num_actions,
                            DType dtype = DType::kFloat32);
  ParamTensors zeros_like() const;

  // Throws DimensionError naming the first inconsistent tensor.
  void check_shapes() const;
  bool all_finite() const;

  friend bool operator==(const ParamTensors&, const ParamTensors&) = default;
};

struct ModelParams : ParamTensors {
  std::int64_t version = 0;

  // PyTorch-Linear style init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static ModelParams init(std::int64_t obs_dim, std::int64_t hidden, std::int64_t num_actions,
                          std::uint64_t seed, DType dtype = DType::kFloat32);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using GradientSet = ParamTensors;

struct MlpOutput {
  NDArray logits;    // [N, num_actions]
  NDArray baseline;  // [N]
};

// obs: [N, obs_dim], any dtype; converted to the params dtype.
MlpOutput mlp_forward(const ParamTensors& params, const NDArray& obs);

// Gradients of sum(logits_grad * logits) + sum(baseline_grad * baseline).
GradientSet mlp_backward(const ParamTensors& params, const NDArray& obs,
                         const NDArray& logits_grad, const NDArray& baseline_grad);

// Row-wise over the last axis, max-subtracted.
NDArray log_softmax(const NDArray& logits);
NDArray softmax(const NDArray& logits);

// -sum_a p_a log p_a over the last axis; drops that axis.
NDArray entropy(const NDArray& logits);

// Scales grads in place so the global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(GradientSet& grads, double max_norm);

struct RmsPropState {
  ParamTensors square_avg;
  double learning_rate = 0.005;
  double alpha = 0.99;
  double epsilon = 0.01;

  static RmsPropState for_params(const ParamTensors& params, double learning_rate, double alpha,
                                 double epsilon);
};

// square_avg <- alpha * square_avg + (1 - alpha) * g^2
// param      <- param - lr * g / (sqrt(square_avg) + eps)
// Rejects non-finite gradients with NonFiniteError before touching state.
void rmsprop_step(ModelParams& params, const GradientSet& grads, RmsPropState& state);

// Index of the largest logit in each row of [N, A].
std::vector<std::int64_t> argmax_rows(const NDArray& logits);

// Draws one action per row of [N, A] from softmax(logits).
std::vector<std::int64_t> sample_rows(const NDArray& logits, std::mt19937_64& rng);

}  // namespace beastpipe

#endif  // BEASTPIPE_MODEL_HPP_
