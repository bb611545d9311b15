#include "beastpipe/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace beastpipe {

ParamTensors ParamTensors::zeros(std::int64_t obs_dim, std::int64_t hidden,
                                 std::int64_t num_actions, DType dtype) {
  if (obs_dim < 1 || hidden < 1 || num_actions < 1) {
    throw DimensionError("model dims must be positive");
  }
  return ParamTensors{
      NDArray(dtype, {hidden, obs_dim}), NDArray(dtype, {hidden}),
      NDArray(dtype, {num_actions, hidden}), NDArray(dtype, {num_actions}),
      NDArray(dtype, {1, hidden}), NDArray(dtype, {1}),
  };
}

ParamTensors ParamTensors::zeros_like() const {
  return zeros(obs_dim(), hidden(), num_actions(), dtype());
}

void ParamTensors::check_shapes() const {
  if (w1.ndim() != 2) throw DimensionError("W1 must be 2-d, got " + shape_str(w1.dims()));
  const auto ref = zeros(obs_dim(), hidden(), wp.ndim() == 2 ? wp.dim(0) : 1, dtype());
  const auto mine = tensors();
  const auto want = ref.tensors();
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->dims() != want[i]->dims() || mine[i]->dtype() != want[i]->dtype()) {
      throw DimensionError(std::string(kNames[i]) + ": expected " +
                           dtype_name(want[i]->dtype()) + shape_str(want[i]->dims()) + ", got " +
                           dtype_name(mine[i]->dtype()) + shape_str(mine[i]->dims()));
    }
  }
}

bool ParamTensors::all_finite() const {
  return std::ranges::all_of(tensors(), [](const NDArray* t) { return t->all_finite(); });
}

ModelParams ModelParams::init(std::int64_t obs_dim, std::int64_t hidden, std::int64_t num_actions,
                              std::uint64_t seed, DType dtype) {
  ModelParams p;
  static_cast<ParamTensors&>(p) = ParamTensors::zeros(obs_dim, hidden, num_actions, dtype);
  std::mt19937_64 rng(seed);
  auto fill = [&](NDArray& t, std::int64_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::int64_t i = 0; i < t.size(); ++i) t.set(i, dist(rng));
  };
  fill(p.w1, obs_dim);
  fill(p.b1, obs_dim);
  fill(p.wp, hidden);
  fill(p.bp, hidden);
  fill(p.wv, hidden);
  fill(p.bv, hidden);
  return p;
}

namespace {

void check_obs(const ParamTensors& params, const NDArray& obs) {
  if (obs.ndim() != 2 || obs.dim(1) != params.obs_dim() || obs.dim(0) < 1) {
    throw DimensionError("observations must be [N >= 1, " + std::to_string(params.obs_dim()) +
                         "], got " + shape_str(obs.dims()));
  }
}

// hidden pre-activations [N, H]
template <typename T>
std::vector<T> hidden_preact(const ParamTensors& params, std::span<const T> x, std::int64_t n) {
  const auto d = params.obs_dim();
  const auto h = params.hidden();
  const auto w1 = params.w1.values<T>();
  const auto b1 = params.b1.values<T>();
  std::vector<T> pre(static_cast<std::size_t>(n * h));
  for (std::int64_t r = 0; r < n; ++r) {
    const T* xr = x.data() + r * d;
    for (std::int64_t j = 0; j < h; ++j) {
      const T* wj = w1.data() + j * d;
      T acc = b1[j];
      for (std::int64_t i = 0; i < d; ++i) acc += wj[i] * xr[i];
      pre[r * h + j] = acc;
    }
  }
  return pre;
}

template <typename T>
MlpOutput forward_impl(const ParamTensors& params, const NDArray& obs_any) {
  const NDArray obs = obs_any.astype(dtype_of<T>());
  const auto n = obs.dim(0);
  const auto h = params.hidden();
  const auto a = params.num_actions();
  auto act = hidden_preact<T>(params, obs.values<T>(), n);
  for (auto& v : act) v = std::max(v, T(0));

  MlpOutput out{NDArray(dtype_of<T>(), {n, a}), NDArray(dtype_of<T>(), {n})};
  auto logits = out.logits.values<T>();
  auto baseline = out.baseline.values<T>();
  const auto wp = params.wp.values<T>();
  const auto bp = params.bp.values<T>();
  const auto wv = params.wv.values<T>();
  const T bv = params.bv.values<T>()[0];
  for (std::int64_t r = 0; r < n; ++r) {
    const T* hr = act.data() + r * h;
    for (std::int64_t k = 0; k < a; ++k) {
      const T* wk = wp.data() + k * h;
      T acc = bp[k];
      for (std::int64_t j = 0; j < h; ++j) acc += wk[j] * hr[j];
      logits[r * a + k] = acc;
    }
    T v = bv;
    for (std::int64_t j = 0; j < h; ++j) v += wv[j] * hr[j];
    baseline[r] = v;
  }
  return out;
}

template <typename T>
GradientSet backward_impl(const ParamTensors& params, const NDArray& obs_any,
                          const NDArray& logits_grad_any, const NDArray& baseline_grad_any) {
  const NDArray obs = obs_any.astype(dtype_of<T>());
  const NDArray lg_arr = logits_grad_any.astype(dtype_of<T>());
  const NDArray bg_arr = baseline_grad_any.astype(dtype_of<T>());
  const auto n = obs.dim(0);
  const auto d = params.obs_dim();
  const auto h = params.hidden();
  const auto a = params.num_actions();
  const auto x = obs.values<T>();
  const auto gl = lg_arr.values<T>();
  const auto gb = bg_arr.values<T>();
  const auto wp = params.wp.values<T>();
  const auto wv = params.wv.values<T>();

  const auto pre = hidden_preact<T>(params, x, n);
  GradientSet g = params.zeros_like();
  auto dw1 = g.w1.values<T>();
  auto db1 = g.b1.values<T>();
  auto dwp = g.wp.values<T>();
  auto dbp = g.bp.values<T>();
  auto dwv = g.wv.values<T>();
  auto dbv = g.bv.values<T>();

  std::vector<T> dh(static_cast<std::size_t>(h));
  for (std::int64_t r = 0; r < n; ++r) {
    const T* pr = pre.data() + r * h;
    const T* glr = gl.data() + r * a;
    const T gbr = gb[r];
    std::fill(dh.begin(), dh.end(), T(0));
    for (std::int64_t k = 0; k < a; ++k) {
      const T gk = glr[k];
      dbp[k] += gk;
      if (gk == T(0)) continue;
      T* dwk = dwp.data() + k * h;
      const T* wk = wp.data() + k * h;
      for (std::int64_t j = 0; j < h; ++j) {
        const T hj = std::max(pr[j], T(0));
        dwk[j] += gk * hj;
        dh[j] += gk * wk[j];
      }
    }
    dbv[0] += gbr;
    for (std::int64_t j = 0; j < h; ++j) {
      dwv[j] += gbr * std::max(pr[j], T(0));
      dh[j] += gbr * wv[j];
    }
    const T* xr = x.data() + r * d;
    for (std::int64_t j = 0; j < h; ++j) {
      if (pr[j] <= T(0)) continue;
      const T gj = dh[j];
      db1[j] += gj;
      T* dwj = dw1.data() + j * d;
      for (std::int64_t i = 0; i < d; ++i) dwj[i] += gj * xr[i];
    }
  }
  return g;
}

std::int64_t rows_of(const NDArray& logits) {
  if (logits.ndim() < 1 || logits.dims().back() < 1) {
    throw DimensionError("logits need a non-empty last axis, got " + shape_str(logits.dims()));
  }
  return logits.size() / logits.dims().back();
}

}  // namespace

MlpOutput mlp_forward(const ParamTensors& params, const NDArray& obs) {
  check_obs(params, obs);
  return visit_floating(params.dtype(),
                        [&]<typename T>(T) { return forward_impl<T>(params, obs); });
}

GradientSet mlp_backward(const ParamTensors& params, const NDArray& obs,
                         const NDArray& logits_grad, const NDArray& baseline_grad) {
  check_obs(params, obs);
  const Shape want_logits{obs.dim(0), params.num_actions()};
  const Shape want_baseline{obs.dim(0)};
  if (logits_grad.dims() != want_logits) {
    throw DimensionError("logits upstream must be " + shape_str(want_logits) + ", got " +
                         shape_str(logits_grad.dims()));
  }
  if (baseline_grad.dims() != want_baseline) {
    throw DimensionError("baseline upstream must be " + shape_str(want_baseline) + ", got " +
                         shape_str(baseline_grad.dims()));
  }
  return visit_floating(params.dtype(), [&]<typename T>(T) {
    return backward_impl<T>(params, obs, logits_grad, baseline_grad);
  });
}

NDArray log_softmax(const NDArray& logits) {
  const auto rows = rows_of(logits);
  const auto a = logits.dims().back();
  return visit_floating(logits.dtype(), [&]<typename T>(T) {
    NDArray out(logits.dtype(), logits.dims());
    const auto in = logits.values<T>();
    auto o = out.values<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* z = in.data() + r * a;
      const T m = *std::max_element(z, z + a);
      T sum = 0;
      for (std::int64_t k = 0; k < a; ++k) sum += std::exp(z[k] - m);
      const T lse = m + std::log(sum);
      for (std::int64_t k = 0; k < a; ++k) o[r * a + k] = z[k] - lse;
    }
    return out;
  });
}

NDArray softmax(const NDArray& logits) {
  NDArray out = log_softmax(logits);
  visit_floating(out.dtype(), [&]<typename T>(T) {
    for (auto& v : out.values<T>()) v = std::exp(v);
  });
  return out;
}

NDArray entropy(const NDArray& logits) {
  const auto rows = rows_of(logits);
  const auto a = logits.dims().back();
  const NDArray logp = log_softmax(logits);
  Shape dims = logits.dims();
  dims.pop_back();
  return visit_floating(logits.dtype(), [&]<typename T>(T) {
    NDArray out(logits.dtype(), dims);
    const auto lp = logp.values<T>();
    auto o = out.values<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      T h = 0;
      for (std::int64_t k = 0; k < a; ++k) {
        const T l = lp[r * a + k];
        h -= std::exp(l) * l;
      }
      o[r] = std::max(h, T(0));
    }
    return out;
  });
}

double clip_grad_norm(GradientSet& grads, double max_norm) {
  double sq = 0.0;
  for (const NDArray* t : std::as_const(grads).tensors()) {
    for (std::int64_t i = 0; i < t->size(); ++i) {
      const double v = t->get(i);
      sq += v * v;
    }
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (NDArray* t : grads.tensors()) {
      visit_floating(t->dtype(), [&]<typename T>(T) {
        for (auto& v : t->values<T>()) v = static_cast<T>(v * scale);
      });
    }
  }
  return norm;
}

RmsPropState RmsPropState::for_params(const ParamTensors& params, double learning_rate,
                                      double alpha, double epsilon) {
  return RmsPropState{params.zeros_like(), learning_rate, alpha, epsilon};
}

void rmsprop_step(ModelParams& params, const GradientSet& grads, RmsPropState& state) {
  params.check_shapes();
  grads.check_shapes();
  state.square_avg.check_shapes();
  const auto p = params.tensors();
  const auto g = grads.tensors();
  const auto s = state.square_avg.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]->dims() != g[i]->dims() || p[i]->dims() != s[i]->dims()) {
      throw DimensionError(std::string(ParamTensors::kNames[i]) + ": gradient shape " +
                           shape_str(g[i]->dims()) + " vs parameter " + shape_str(p[i]->dims()));
    }
    if (!g[i]->all_finite()) {
      throw NonFiniteError(std::string("non-finite gradient in ") +
                           std::string(ParamTensors::kNames[i]));
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    visit_floating(p[i]->dtype(), [&]<typename T>(T) {
      auto pv = p[i]->values<T>();
      auto sv = s[i]->values<T>();
      const NDArray gcast = g[i]->astype(dtype_of<T>());
      const auto gv = gcast.values<T>();
      const T alpha = static_cast<T>(state.alpha);
      const T lr = static_cast<T>(state.learning_rate);
      const T eps = static_cast<T>(state.epsilon);
      for (std::size_t k = 0; k < pv.size(); ++k) {
        sv[k] = alpha * sv[k] + (T(1) - alpha) * gv[k] * gv[k];
        pv[k] -= lr * gv[k] / (std::sqrt(sv[k]) + eps);
      }
    });
  }
  ++params.version;
}

std::vector<std::int64_t> argmax_rows(const NDArray& logits) {
  const auto rows = rows_of(logits);
  const auto a = logits.dims().back();
  std::vector<std::int64_t> out(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t best = 0;
    for (std::int64_t k = 1; k < a; ++k) {
      if (logits.get(r * a + k) > logits.get(r * a + best)) best = k;
    }
    out[r] = best;
  }
  return out;
}

std::vector<std::int64_t> sample_rows(const NDArray& logits, std::mt19937_64& rng) {
  const auto rows = rows_of(logits);
  const auto a = logits.dims().back();
  const NDArray probs = softmax(logits.astype(DType::kFloat64));
  const auto p = probs.values<double>();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::int64_t> out(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double draw = u(rng);
    double cum = 0.0;
    std::int64_t pick = a - 1;
    for (std::int64_t k = 0; k < a; ++k) {
      cum += p[r * a + k];
      if (draw < cum) {
        pick = k;
        break;
      }
    }
    out[r] = pick;
  }
  return out;
}

}  // namespace beastpipe
