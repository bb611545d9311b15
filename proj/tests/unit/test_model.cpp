#include <doctest.h>

#include <cmath>
#include <random>

#include "beastpipe/errors.hpp"
#include "beastpipe/model.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace beastpipe;
using testutil::to_vec;

namespace {

ParamTensors tiny(double w1, double wp) {
  ParamTensors p = ParamTensors::zeros(1, 1, 1, DType::kFloat64);
  p.w1.set(0, w1);
  p.wp.set(0, wp);
  return p;
}

// Upstream-weighted output of the oracle network; FD target.
double weighted_output(const oracle::Mlp& m, const std::vector<double>& obs, int n,
                       const std::vector<double>& gl, const std::vector<double>& gb) {
  std::vector<double> logits, baseline;
  oracle::mlp_forward(m, obs, n, logits, baseline);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += gl[i] * logits[i];
  for (std::size_t i = 0; i < baseline.size(); ++i) s += gb[i] * baseline[i];
  return s;
}

}  // namespace

TEST_CASE("mlp_forward with zero params gives zeros") {
  auto p = ParamTensors::zeros(3, 4, 2);
  auto out = mlp_forward(p, NDArray::from<float>({2, 3}, {1, 2, 3, -4, 5, 6}));
  CHECK(out.logits.dims() == Shape{2, 2});
  CHECK(out.baseline.dims() == Shape{2});
  for (auto v : to_vec(out.logits)) CHECK(v == 0.0);
  for (auto v : to_vec(out.baseline)) CHECK(v == 0.0);
}

TEST_CASE("mlp_forward hand evaluation") {
  auto out = mlp_forward(tiny(1.0, 2.0), NDArray::from<double>({1, 1}, {3.0}));
  CHECK(out.logits.get(0) == 6.0);

  auto dead = tiny(-1.0, 2.0);
  dead.bp.set(0, 0.25);
  auto d = mlp_forward(dead, NDArray::from<double>({1, 1}, {2.0}));
  CHECK(d.logits.get(0) == 0.25);
}

TEST_CASE("mlp_forward matches the reference network") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = testutil::random_params(5, 7, 3, rng);
    auto obs = testutil::random_array(DType::kFloat64, {4, 5}, rng);
    auto out = mlp_forward(p, obs);
    std::vector<double> logits, baseline;
    oracle::mlp_forward(testutil::to_oracle(p), to_vec(obs), 4, logits, baseline);
    auto got = to_vec(out.logits);
    for (std::size_t i = 0; i < logits.size(); ++i) CHECK(got[i] == doctest::Approx(logits[i]).epsilon(1e-12));
    auto gb = to_vec(out.baseline);
    for (std::size_t i = 0; i < baseline.size(); ++i) CHECK(gb[i] == doctest::Approx(baseline[i]).epsilon(1e-12));
  }
}

TEST_CASE("mlp_forward rejects mismatched observations") {
  auto p = ParamTensors::zeros(3, 4, 2);
  CHECK_THROWS_AS(mlp_forward(p, NDArray(DType::kFloat32, {2, 4})), DimensionError);
  CHECK_THROWS_AS(mlp_forward(p, NDArray(DType::kFloat32, {3})), DimensionError);
}

TEST_CASE("mlp_backward of zero upstream is zero") {
  std::mt19937_64 rng(3);
  auto p = testutil::random_params(4, 6, 3, rng);
  auto obs = testutil::random_array(DType::kFloat64, {5, 4}, rng);
  auto g = mlp_backward(p, obs, NDArray(DType::kFloat64, {5, 3}), NDArray(DType::kFloat64, {5}));
  for (const NDArray* t : g.tensors()) {
    for (auto v : to_vec(*t)) CHECK(v == 0.0);
  }
}

TEST_CASE("mlp_backward matches central finite differences") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int D = dim(rng), H = dim(rng), A = dim(rng), N = dim(rng);
    auto p = testutil::random_params(D, H, A, rng);
    auto obs = testutil::random_array(DType::kFloat64, {N, D}, rng);
    auto gl = testutil::random_array(DType::kFloat64, {N, A}, rng);
    auto gb = testutil::random_array(DType::kFloat64, {N}, rng);
    const GradientSet g = mlp_backward(p, obs, gl, gb);

    oracle::Mlp m = testutil::to_oracle(p);
    const auto o = to_vec(obs), vl = to_vec(gl), vb = to_vec(gb);
    auto f = [&] { return weighted_output(m, o, N, vl, vb); };
    std::vector<double>* fields[] = {&m.w1, &m.b1, &m.wp, &m.bp, &m.wv, &m.bv};
    const auto analytic = g.tensors();
    for (int k = 0; k < 6; ++k) {
      const auto an = to_vec(*analytic[k]);
      for (std::size_t i = 0; i < an.size(); ++i) {
        const double fd = oracle::central_difference(f, (*fields[k])[i], 1e-5);
        const double err = oracle::rel_error(an[i], fd);
        worst = std::max(worst, err);
        CHECK_MESSAGE(err < 1e-4, "tensor " << ParamTensors::kNames[k] << " index " << i);
      }
    }
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("dead relu unit has zero W1 gradient row") {
  auto p = ParamTensors::zeros(2, 2, 1, DType::kFloat64);
  p.w1 = NDArray::from<double>({2, 2}, {1, 1, -1, -1});
  p.wp = NDArray::from<double>({1, 2}, {1, 1});
  p.wv = NDArray::from<double>({1, 2}, {1, 1});
  auto obs = NDArray::from<double>({1, 2}, {1, 2});
  auto g = mlp_backward(p, obs, NDArray::from<double>({1, 1}, {1}), NDArray::from<double>({1}, {1}));
  CHECK(g.w1.get(0) != 0.0);
  CHECK(g.w1.get(2) == 0.0);
  CHECK(g.w1.get(3) == 0.0);
  CHECK(g.b1.get(1) == 0.0);
}

TEST_CASE("log_softmax examples") {
  auto u = log_softmax(NDArray::from<double>({2}, {0, 0}));
  CHECK(u.get(0) == doctest::Approx(-0.693147).epsilon(1e-6));
  CHECK(u.get(1) == doctest::Approx(-0.693147).epsilon(1e-6));
  auto a = log_softmax(NDArray::from<double>({2}, {1, 0}));
  CHECK(a.get(0) == doctest::Approx(-0.31326).epsilon(1e-5));
  CHECK(a.get(1) == doctest::Approx(-1.31326).epsilon(1e-5));
  auto big = log_softmax(NDArray::from<float>({2}, {1000, 0}));
  CHECK(big.all_finite());
  CHECK(big.get(0) == doctest::Approx(0.0));
  CHECK(big.get(1) == doctest::Approx(-1000.0));
}

TEST_CASE("log_softmax rows exponentiate to one") {
  std::mt19937_64 rng(5);
  auto x = testutil::random_array(DType::kFloat64, {6, 5}, rng, -20, 20);
  auto l = log_softmax(x);
  for (int r = 0; r < 6; ++r) {
    double s = 0;
    for (int a = 0; a < 5; ++a) s += std::exp(l.get(r * 5 + a));
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("entropy examples and bounds") {
  CHECK(entropy(NDArray::from<double>({2}, {0, 0})).get(0) == doctest::Approx(std::log(2.0)));
  CHECK(entropy(NDArray::from<double>({1, 7}, {3, 3, 3, 3, 3, 3, 3})).get(0) ==
        doctest::Approx(std::log(7.0)));
  CHECK(entropy(NDArray::from<double>({2}, {10, -10})).get(0) < 1e-3);

  std::mt19937_64 rng(8);
  auto x = testutil::random_array(DType::kFloat64, {50, 4}, rng, -30, 30);
  auto h = entropy(x);
  CHECK(h.dims() == Shape{50});
  for (auto v : to_vec(h)) {
    CHECK(v >= 0.0);
    CHECK(v <= std::log(4.0) + 1e-12);
  }
}

TEST_CASE("rmsprop hand-evaluated step") {
  ModelParams p;
  static_cast<ParamTensors&>(p) = ParamTensors::zeros(1, 1, 1, DType::kFloat64);
  p.w1.set(0, 1.0);
  GradientSet g = p.zeros_like();
  g.w1.set(0, 1.0);
  RmsPropState s = RmsPropState::for_params(p, 0.1, 0.99, 0.0);
  rmsprop_step(p, g, s);
  CHECK(s.square_avg.w1.get(0) == doctest::Approx(0.01));
  CHECK(p.w1.get(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.version == 1);
}

TEST_CASE("rmsprop zero gradient leaves params but bumps version") {
  std::mt19937_64 rng(1);
  ModelParams p;
  static_cast<ParamTensors&>(p) = testutil::random_params(3, 4, 2, rng);
  const ParamTensors before = p;
  RmsPropState s = RmsPropState::for_params(p, 0.005, 0.99, 0.01);
  rmsprop_step(p, p.zeros_like(), s);
  CHECK(static_cast<const ParamTensors&>(p) == before);
  CHECK(p.version == 1);
}

TEST_CASE("rmsprop steps shrink under a repeated gradient") {
  ModelParams p;
  static_cast<ParamTensors&>(p) = ParamTensors::zeros(1, 1, 1, DType::kFloat64);
  GradientSet g = p.zeros_like();
  g.w1.set(0, 1.0);
  RmsPropState s = RmsPropState::for_params(p, 0.1, 0.99, 0.01);
  rmsprop_step(p, g, s);
  const double step1 = -p.w1.get(0);
  rmsprop_step(p, g, s);
  const double step2 = -p.w1.get(0) - step1;
  CHECK(step2 < step1);
  CHECK(p.version == 2);
}

TEST_CASE("rmsprop rejects non-finite gradients untouched") {
  ModelParams p;
  static_cast<ParamTensors&>(p) = ParamTensors::zeros(2, 2, 2);
  GradientSet g = p.zeros_like();
  g.bp.set(1, INFINITY);
  RmsPropState s = RmsPropState::for_params(p, 0.1, 0.99, 0.01);
  const ModelParams before = p;
  CHECK_THROWS_AS(rmsprop_step(p, g, s), NonFiniteError);
  CHECK(p == before);
}

TEST_CASE("rmsprop with epsilon stays finite and keeps square_avg non-negative") {
  std::mt19937_64 rng(4);
  ModelParams p;
  static_cast<ParamTensors&>(p) = testutil::random_params(3, 3, 3, rng);
  RmsPropState s = RmsPropState::for_params(p, 0.01, 0.99, 1e-8);
  for (int i = 0; i < 50; ++i) {
    GradientSet g = p.zeros_like();
    if (i % 2) g = testutil::random_params(3, 3, 3, rng);
    rmsprop_step(p, g, s);
    CHECK(p.all_finite());
    for (const NDArray* t : s.square_avg.tensors()) {
      for (auto v : to_vec(*t)) CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("clip_grad_norm scales to the limit") {
  GradientSet g = ParamTensors::zeros(1, 1, 1, DType::kFloat64);
  g.w1.set(0, 3.0);
  g.bv.set(0, 4.0);
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.w1.get(0) == doctest::Approx(0.6));
  CHECK(g.bv.get(0) == doctest::Approx(0.8));
  CHECK(clip_grad_norm(g, 10.0) == doctest::Approx(1.0));
  CHECK(g.w1.get(0) == doctest::Approx(0.6));
}

TEST_CASE("init draws within fan-in bounds and is seeded") {
  auto a = ModelParams::init(25, 128, 4, 7);
  auto b = ModelParams::init(25, 128, 4, 7);
  auto c = ModelParams::init(25, 128, 4, 8);
  CHECK(a == b);
  CHECK_FALSE(a.w1 == c.w1);
  CHECK(a.version == 0);
  const double bound1 = 1.0 / std::sqrt(25.0), bound2 = 1.0 / std::sqrt(128.0);
  for (auto v : to_vec(a.w1)) CHECK(std::abs(v) <= bound1);
  for (auto v : to_vec(a.wp)) CHECK(std::abs(v) <= bound2);
  a.check_shapes();
}

TEST_CASE("check_shapes names the inconsistent tensor") {
  auto p = ParamTensors::zeros(3, 4, 2);
  p.bp = NDArray(DType::kFloat32, {3});
  try {
    p.check_shapes();
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("bp") != std::string::npos);
  }
}

TEST_CASE("sampling a near-deterministic policy") {
  std::mt19937_64 rng(99);
  NDArray logits = NDArray::from<float>({1, 2}, {10, -10});
  int zeros = 0;
  for (int i = 0; i < 10000; ++i) zeros += sample_rows(logits, rng)[0] == 0;
  CHECK(zeros / 10000.0 >= 0.999);
}

TEST_CASE("sampling uniform logits is reproducible for a seed") {
  NDArray logits(DType::kFloat32, {16, 4});
  std::mt19937_64 a(5), b(5);
  CHECK(sample_rows(logits, a) == sample_rows(logits, b));
  std::mt19937_64 rng(6);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 1000; ++i) {
    for (auto x : sample_rows(logits, rng)) ++counts[x];
  }
  for (int c : counts) CHECK(std::abs(c - 4000) < 300);
}

TEST_CASE("argmax_rows") {
  auto x = NDArray::from<float>({2, 3}, {0, 5, 1, 9, -1, 2});
  CHECK(argmax_rows(x) == std::vector<std::int64_t>{1, 0});
}
