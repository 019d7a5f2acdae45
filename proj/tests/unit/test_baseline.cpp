#include <cmath>

#include "doctest.h"
#include "dpo/baseline.hpp"
#include "dpo/critic.hpp"
#include "oracles.hpp"

using namespace dpo;

namespace {

// One affine layer: out = W x + c, parameters laid out row-major then bias.
Network affine(int in, int out, const std::vector<double>& weights,
               const std::vector<double>& bias) {
  const MlpSpec spec = MlpSpec::make(in, {}, out);
  ParamVector p(spec.param_count());
  std::copy(weights.begin(), weights.end(), p.values.begin());
  std::copy(bias.begin(), bias.end(), p.values.begin() + in * out);
  return Network(spec, p);
}

BetaPolicy small_policy(std::uint64_t seed) {
  Rng rng = make_stream(seed, 1);
  return BetaPolicy(2, ActionBounds({-1.0}, {1.0}), {8}, rng);
}

Batch random_obs(int n, Rng& rng) {
  Batch obs(2, n);
  for (int j = 0; j < n; ++j) {
    obs(0, j) = standard_normal(rng);
    obs(1, j) = standard_normal(rng);
  }
  return obs;
}

}  // namespace

TEST_SUITE("baseline") {

TEST_CASE("constant critic and zero residual give the critic value") {
  const Network critic = affine(3, 2, std::vector<double>(6, 0.0), {4.0, 0.0});
  const Network phi = affine(3, 1, {0, 0, 0}, {0.0});
  const BetaPolicy policy = small_policy(1);
  Rng rng = make_stream(40, 0);
  const Batch obs = random_obs(5, rng);
  for (int m : {1, 3, 30}) {
    const Eigen::VectorXd b = baseline_values(phi, critic, policy, obs, m, rng);
    for (Eigen::Index j = 0; j < b.size(); ++j) CHECK(b[j] == 4.0);
  }
}

TEST_CASE("value is the residual-weighted mean over the sampled actions") {
  // Critic mean equals the action; residual is constant 0.5.
  const Network critic = affine(3, 2, {0, 0, 1, 0, 0, 0}, {0.0, 0.0});
  const Network phi = affine(3, 1, {0, 0, 0}, {0.5});
  const BetaPolicy policy = small_policy(2);
  Rng rng = make_stream(41, 0);
  const Batch obs = random_obs(4, rng);
  for (int m : {1, 3}) {
    const BaselineEstimate est = estimate_baseline(phi, critic, policy, obs, m, rng);
    REQUIRE(est.sampled_actions.cols() == 4 * m);
    for (Eigen::Index j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) acc += 1.5 * est.sampled_actions(0, j * m + i);
      CHECK(est.values[j] == doctest::Approx(acc / m).epsilon(1e-14));
      for (int i = 0; i < m; ++i) CHECK(est.repeated_obs.col(j * m + i) == obs.col(j));
    }
  }
}

TEST_CASE("hand example: three actions") {
  const Network critic = affine(3, 2, {0, 0, 1, 0, 0, 0}, {2.0, 0.0});
  const Network phi = affine(3, 1, {0, 0, 0}, {0.0});
  const BetaPolicy policy = small_policy(3);
  Rng rng = make_stream(42, 0);
  const Batch obs = Batch::Zero(2, 1);
  const BaselineEstimate est = estimate_baseline(phi, critic, policy, obs, 3, rng);
  const double mean_action = est.sampled_actions.row(0).mean();
  CHECK(est.values[0] == doctest::Approx(2.0 + mean_action).epsilon(1e-14));
}

TEST_CASE("loss vanishes when critic and baseline agree") {
  const Network critic = affine(3, 2, std::vector<double>(6, 0.0), {-1.5, 0.3});
  Network phi = affine(3, 1, {0, 0, 0}, {0.0});
  const BetaPolicy policy = small_policy(4);
  Rng rng = make_stream(43, 0);
  const Batch obs = random_obs(16, rng);
  const Batch actions = Batch::Random(1, 16);
  phi.params.zero_grad();
  const double loss = baseline_loss_and_grad(phi, critic, policy, obs, actions, 5, rng);
  CHECK(loss == 0.0);
  for (double g : phi.params.grads) CHECK(g == 0.0);
}

TEST_CASE("loss gradient matches central differences") {
  Rng init = make_stream(44, 0);
  const Network critic(critic_spec(2, 1, {4}), init);
  Network phi(residual_spec(2, 1, {3}), init);
  const BetaPolicy policy = small_policy(5);
  const Batch obs = random_obs(6, init);
  const Batch actions = Batch::Random(1, 6);
  const Rng seed = make_stream(45, 0);
  Rng r = seed;
  phi.params.zero_grad();
  baseline_loss_and_grad(phi, critic, policy, obs, actions, 4, r);
  const ParamStorage analytic = phi.params.grads;
  Network probe = phi;
  const auto numeric = oracle_ref::numeric_gradient(probe.params, [&] {
    Rng rr = seed;
    return baseline_loss_and_grad(probe, critic, policy, obs, actions, 4, rr);
  });
  CHECK(oracle_ref::relative_error(analytic, numeric) < 1e-6);
}

TEST_CASE("many samples approach the expectation under the policy") {
  // Critic mean equals the action, so b(s) tends to the policy mean action.
  const Network critic = affine(3, 2, {0, 0, 1, 0, 0, 0}, {0.0, 0.0});
  const Network phi = affine(3, 1, {0, 0, 0}, {0.0});
  const BetaPolicy policy = small_policy(6);
  Rng rng = make_stream(46, 0);
  const Batch obs = random_obs(3, rng);
  const Batch mean = policy.mean_action(obs);
  const int m = 200000;
  const BaselineEstimate est = estimate_baseline(phi, critic, policy, obs, m, rng);
  for (Eigen::Index j = 0; j < 3; ++j) {
    oracle_ref::Moments mom;
    for (int i = 0; i < m; ++i) mom.add(est.sampled_actions(0, j * m + i));
    CHECK(std::abs(est.values[j] - mean(0, j)) < 4.0 * mom.stderr_of_mean());
  }
}

TEST_CASE("optimizer steps reduce the loss on a fixed batch") {
  Rng init = make_stream(47, 0);
  const Network critic(critic_spec(2, 1, {16}), init);
  Network phi(residual_spec(2, 1, {16}), init);
  const BetaPolicy policy = small_policy(7);
  const Batch obs = random_obs(64, init);
  const Batch actions = policy.sample(obs, init).action;
  AdamState adam(phi.params.size(), 1e-3);
  const Rng eval_seed = make_stream(48, 0);
  auto eval = [&] {
    Network probe = phi;
    Rng r = eval_seed;
    return baseline_loss_and_grad(probe, critic, policy, obs, actions, 30, r);
  };
  const double before = eval();
  Rng rng = make_stream(49, 0);
  for (int k = 0; k < 200; ++k) baseline_update(phi, adam, critic, policy, obs, actions, 30, rng);
  CHECK(eval() <= before);
  CHECK(phi.params.all_finite());
}

TEST_CASE("invalid arguments throw") {
  const Network critic = affine(3, 2, std::vector<double>(6, 0.0), {0.0, 0.0});
  const Network phi = affine(3, 1, {0, 0, 0}, {0.0});
  const BetaPolicy policy = small_policy(8);
  Rng rng = make_stream(50, 0);
  CHECK_THROWS_AS(baseline_values(phi, critic, policy, Batch::Zero(2, 1), 0, rng),
                  std::invalid_argument);
  BaselineConfig cfg;
  cfg.m_actions = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

}
