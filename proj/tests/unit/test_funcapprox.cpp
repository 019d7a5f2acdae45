#include <cmath>
#include <sstream>

#include "doctest.h"
#include "dpo/funcapprox.hpp"
#include "oracles.hpp"

using namespace dpo;

namespace {

// Plain loops over the flat layout, independent of the Eigen path.
std::vector<double> naive_forward(const MlpSpec& spec, const ParamVector& p,
                                  std::vector<double> h) {
  std::size_t pos = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.fan_in(l), out = spec.fan_out(l);
    std::vector<double> z(out, 0.0);
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < in; ++i) z[o] += p.values[pos + o * in + i] * h[i];
    }
    pos += static_cast<std::size_t>(in * out);
    for (int o = 0; o < out; ++o) {
      z[o] += p.values[pos + o];
      switch (spec.activations[l]) {
        case Activation::kTanh: z[o] = std::tanh(z[o]); break;
        case Activation::kSoftplus: z[o] = std::log1p(std::exp(z[o])); break;
        case Activation::kIdentity: break;
      }
    }
    pos += static_cast<std::size_t>(out);
    h = z;
  }
  return h;
}

}  // namespace

TEST_SUITE("funcapprox") {

TEST_CASE("default spec and parameter count") {
  const MlpSpec s = MlpSpec::with_defaults(5, 3);
  CHECK(s.hidden_dims == std::vector<int>{256, 256});
  CHECK(s.activations[0] == Activation::kTanh);
  CHECK(s.activations[1] == Activation::kTanh);
  CHECK(s.activations[2] == Activation::kIdentity);
  CHECK(s.param_count() == (5 + 1) * 256 + (256 + 1) * 256 + (256 + 1) * 3);
}

TEST_CASE("zero network gives zero output") {
  const MlpSpec s = MlpSpec::make(3, {4}, 2);
  ParamVector p(s.param_count());
  const std::vector<double> y = forward(s, p, std::vector<double>{1.0, -2.0, 3.0});
  CHECK(y == std::vector<double>{0.0, 0.0});
}

TEST_CASE("single affine layer") {
  const MlpSpec s = MlpSpec::make(1, {}, 1);
  ParamVector p(2);
  p.values = {2.0, 1.0};
  CHECK(forward(s, p, std::vector<double>{3.0})[0] == 7.0);
  const std::vector<double> gin = backward(s, p, std::vector<double>{3.0}, std::vector<double>{1.0});
  CHECK(p.grads[0] == 3.0);
  CHECK(p.grads[1] == 1.0);
  CHECK(gin[0] == 2.0);
}

TEST_CASE("forward matches naive loops") {
  Rng rng = make_stream(3, 0);
  MlpSpec s = MlpSpec::make(4, {7, 5}, 3);
  s.activations[1] = Activation::kSoftplus;
  const ParamVector p = init_params(s, rng);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> x(4);
    for (double& v : x) v = 2.0 * standard_normal(rng);
    const std::vector<double> a = forward(s, p, x);
    const std::vector<double> b = naive_forward(s, p, x);
    for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("init stays inside the fan-in range") {
  Rng rng = make_stream(4, 0);
  const MlpSpec s = MlpSpec::make(9, {16}, 2);
  const ParamVector p = init_params(s, rng);
  for (std::size_t i = 0; i < 9 * 16 + 16; ++i) CHECK(std::abs(p.values[i]) <= 1.0 / 3.0);
  for (std::size_t i = 9 * 16 + 16; i < p.size(); ++i) CHECK(std::abs(p.values[i]) <= 0.25);
}

TEST_CASE("dimension mismatch throws") {
  const MlpSpec s = MlpSpec::make(2, {3}, 1);
  ParamVector p(s.param_count());
  CHECK_THROWS_AS(forward(s, p, std::vector<double>{1.0}), std::invalid_argument);
  ParamVector bad(3);
  CHECK_THROWS_AS(forward(s, bad, std::vector<double>{1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(backward(s, p, std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("zero output gradient contributes nothing") {
  Rng rng = make_stream(5, 0);
  const MlpSpec s = MlpSpec::make(3, {6}, 2);
  ParamVector p = init_params(s, rng);
  backward(s, p, std::vector<double>{0.3, -1.0, 2.0}, std::vector<double>{0.0, 0.0});
  for (double g : p.grads) CHECK(g == 0.0);
}

TEST_CASE("backward matches central differences") {
  Rng rng = make_stream(6, 0);
  MlpSpec s = MlpSpec::make(3, {5, 4}, 2);
  s.activations[0] = Activation::kSoftplus;
  ParamVector p = init_params(s, rng);
  const std::vector<double> x = {0.4, -1.2, 0.9};
  const std::vector<double> og = {0.7, -1.3};
  p.zero_grad();
  backward(s, p, x, og);
  const ParamStorage analytic = p.grads;
  const auto numeric = oracle_ref::numeric_gradient(p, [&] {
    const std::vector<double> y = forward(s, p, x);
    return y[0] * og[0] + y[1] * og[1];
  });
  CHECK(oracle_ref::relative_error(analytic, numeric) < 1e-4);
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    if (std::abs(numeric[i]) > 1e-6) {
      CHECK(std::abs(analytic[i] - numeric[i]) / std::abs(numeric[i]) < 1e-4);
    }
  }
}

TEST_CASE("batched and per-sample paths agree") {
  Rng rng = make_stream(7, 0);
  const MlpSpec s = MlpSpec::make(2, {8}, 3);
  ParamVector p = init_params(s, rng);
  Batch x(2, 5), g(3, 5);
  for (int j = 0; j < 5; ++j) {
    for (int i = 0; i < 2; ++i) x(i, j) = standard_normal(rng);
    for (int i = 0; i < 3; ++i) g(i, j) = standard_normal(rng);
  }
  const Batch y = forward_batch(s, p, x);
  ParamVector q = p;
  q.zero_grad();
  backward_batch(s, q, x, g);
  p.zero_grad();
  for (int j = 0; j < 5; ++j) {
    const std::vector<double> xj = {x(0, j), x(1, j)};
    const std::vector<double> yj = forward(s, p, xj);
    for (int i = 0; i < 3; ++i) CHECK(y(i, j) == doctest::Approx(yj[i]).epsilon(1e-14));
    backward(s, p, xj, std::vector<double>{g(0, j), g(1, j), g(2, j)});
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(q.grads[i] == doctest::Approx(p.grads[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward-mode product matches directional differences") {
  Rng rng = make_stream(8, 0);
  const MlpSpec s = MlpSpec::make(3, {6}, 2);
  ParamVector p = init_params(s, rng);
  Batch x(3, 4);
  for (int j = 0; j < 4; ++j) for (int i = 0; i < 3; ++i) x(i, j) = standard_normal(rng);
  std::vector<double> dir(p.size());
  for (double& d : dir) d = standard_normal(rng);
  const Batch jv = jvp_batch(s, p, x, dir);
  const double h = 1e-6;
  ParamVector up = p, down = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    up.values[i] += h * dir[i];
    down.values[i] -= h * dir[i];
  }
  const Batch fd = (forward_batch(s, up, x) - forward_batch(s, down, x)) / (2.0 * h);
  CHECK((jv - fd).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("forward is deterministic") {
  Rng rng = make_stream(9, 0);
  const MlpSpec s = MlpSpec::make(4, {16, 16}, 2);
  const ParamVector p = init_params(s, rng);
  Batch x = Batch::Constant(4, 33, 0.25);
  const Batch a = forward_batch(s, p, x);
  const Batch b = forward_batch(s, p, x);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("softplus head is at least one") {
  for (double x : {-800.0, -30.0, -1.0, 0.0, 1.0, 30.0, 800.0}) {
    CHECK(softplus(x) + 1.0 >= 1.0);
    CHECK(std::isfinite(softplus(x)));
  }
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("adam: zero gradient leaves parameters and decays moments") {
  ParamVector p(3);
  p.values = {1.0, -2.0, 0.5};
  AdamState st(3, 1e-3);
  st.first_moment = {0.2, 0.1, -0.3};
  st.second_moment = {0.04, 0.01, 0.09};
  adam_step(p, st);
  // Zero gradients still move parameters through the old moments, so start
  // from empty moments for the fixed-point part.
  ParamVector q(3);
  q.values = {1.0, -2.0, 0.5};
  AdamState fresh(3, 1e-3);
  adam_step(q, fresh);
  CHECK(q.values == ParamStorage{1.0, -2.0, 0.5});
  CHECK(std::abs(st.first_moment[0]) < 0.2);
  CHECK(st.second_moment[2] < 0.09);
  for (double v : st.second_moment) CHECK(v >= 0.0);
}

TEST_CASE("adam: first step has size lr") {
  ParamVector p(1);
  p.values = {0.0};
  p.grads = {0.5};
  AdamState st(1, 1e-3);
  adam_step(p, st);
  CHECK(std::abs(p.values[0]) == doctest::Approx(1e-3 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(p.grads[0] == 0.0);
  CHECK(st.step_count == 1);
}

TEST_CASE("adam descends a parabola") {
  ParamVector p(1);
  p.values = {1.0};
  AdamState st(1, 0.1);
  double prev = 1.0;
  for (int k = 0; k < 100; ++k) {
    p.grads[0] = 2.0 * p.values[0];
    adam_step(p, st);
    const double f = p.values[0] * p.values[0];
    if (k < 5) CHECK(f < prev);
    prev = std::min(prev, f);
  }
  CHECK(p.values[0] * p.values[0] < 1e-2);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng = make_stream(10, 0);
  const Network net(MlpSpec::make(3, {5, 4}, 2), rng);
  std::stringstream ss;
  write_checkpoint(ss, net.spec, net.params);
  CHECK(ss.str().rfind("mlp 3 5 4 2", 0) == 0);
  const Network back = read_checkpoint(ss);
  CHECK(back.spec == net.spec);
  CHECK(back.params.values == net.params.values);
}

}
