#include <cmath>

#include "doctest.h"
#include "dpo/critic.hpp"
#include "oracles.hpp"

using namespace dpo;

namespace {

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

TransitionBatch random_batch(int n, Rng& rng, double p_terminal) {
  TransitionBatch b;
  b.obs.resize(2, n);
  b.actions.resize(1, n);
  b.next_obs.resize(2, n);
  b.rewards.resize(n);
  b.terminals.resize(n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < 2; ++i) {
      b.obs(i, j) = standard_normal(rng);
      b.next_obs(i, j) = standard_normal(rng);
    }
    b.actions(0, j) = 2.0 * uniform01(rng) - 1.0;
    b.rewards[j] = standard_normal(rng);
    b.terminals[j] = uniform01(rng) < p_terminal ? 1 : 0;
  }
  return b;
}

}  // namespace

TEST_SUITE("critic") {

TEST_CASE("zero network") {
  const Network w = affine(3, 2, std::vector<double>(6, 0.0), {0.0, 0.0});
  const GaussianValue z = critic_forward(w, std::vector<double>{0.3, -2.0},
                                         std::vector<double>{0.5});
  CHECK(z.mean == 0.0);
  CHECK(z.stddev == doctest::Approx(std::log(2.0) + 1e-3).epsilon(1e-14));
}

TEST_CASE("standard deviation never drops below the floor") {
  const Network w = affine(3, 2, std::vector<double>(6, 0.0), {1.0, -800.0});
  const GaussianValue z = critic_forward(w, std::vector<double>{0.0, 0.0},
                                         std::vector<double>{0.0});
  CHECK(z.stddev >= kSigmaFloor);
  CHECK(z.stddev == doctest::Approx(kSigmaFloor));
}

TEST_CASE("stacking and batch evaluation agree") {
  Rng rng = make_stream(60, 0);
  const Network w(critic_spec(2, 1, {5}), rng);
  const TransitionBatch b = random_batch(7, rng, 0.0);
  const GaussianBatch z = critic_forward_batch(w, b.obs, b.actions);
  for (int j = 0; j < 7; ++j) {
    const std::vector<double> o = {b.obs(0, j), b.obs(1, j)};
    const std::vector<double> a = {b.actions(0, j)};
    const GaussianValue g = critic_forward(w, o, a);
    CHECK(g.mean == doctest::Approx(z.mean[j]).epsilon(1e-14));
    CHECK(g.stddev == doctest::Approx(z.stddev[j]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(stack_inputs(Batch::Zero(2, 3), Batch::Zero(1, 2)), std::invalid_argument);
}

TEST_CASE("polyak averaging") {
  Network a = affine(1, 2, {1.0, 1.0}, {1.0, 1.0});
  Network b = affine(1, 2, {0.0, 0.0}, {0.0, 0.0});
  CriticPair pair(a, 1.0, 1e-3);
  pair.target = b;
  polyak_update(pair);
  CHECK(pair.target.params.values == pair.online.params.values);

  CriticPair half(a, 0.5, 1e-3);
  half.target = b;
  polyak_update(half);
  for (double v : half.target.params.values) CHECK(v == 0.5);

  CriticPair lag(a, 0.1, 1e-3);
  lag.target = b;
  for (int k = 0; k < 30; ++k) polyak_update(lag);
  for (double v : lag.target.params.values) {
    CHECK(1.0 - v == doctest::Approx(std::pow(0.9, 30)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(CriticPair(a, 0.0, 1e-3), std::invalid_argument);
}

TEST_CASE("terminal transitions regress onto the reward") {
  Rng rng = make_stream(61, 0);
  const Network w(critic_spec(2, 1, {5}), rng);
  const BetaPolicy policy = small_policy(1);
  const TransitionBatch b = random_batch(9, rng, 1.0);
  Network probe = w;
  probe.params.zero_grad();
  const double loss = kl_td_loss_and_grad(probe, w, b, policy, 0.99, rng);
  const GaussianBatch z = critic_forward_batch(w, b.obs, b.actions);
  double expected = 0.0;
  for (int j = 0; j < 9; ++j) {
    expected += gaussian_kl({b.rewards[j], kSigmaFloor}, {z.mean[j], z.stddev[j]});
  }
  CHECK(loss == doctest::Approx(expected / 9).epsilon(1e-12));
}

TEST_CASE("self-consistent constant critic is a fixed point") {
  // With gamma = 1 and zero reward the target equals the model everywhere.
  const Network w = affine(3, 2, std::vector<double>(6, 0.0), {2.5, 0.4});
  const BetaPolicy policy = small_policy(2);
  Rng rng = make_stream(62, 0);
  TransitionBatch b = random_batch(32, rng, 0.0);
  b.rewards.setZero();
  Network probe = w;
  probe.params.zero_grad();
  const double loss = kl_td_loss_and_grad(probe, w, b, policy, 1.0, rng);
  CHECK(std::abs(loss) < 1e-15);
  for (double g : probe.params.grads) CHECK(std::abs(g) < 1e-14);
}

TEST_CASE("gamma zero reduces to regression of the mean on the reward") {
  Rng rng = make_stream(63, 0);
  TransitionBatch b = random_batch(64, rng, 0.0);
  for (int j = 0; j < 64; ++j) {
    b.rewards[j] = 0.5 * b.obs(0, j) - b.obs(1, j) + 2.0 * b.actions(0, j) + 0.25;
  }
  const BetaPolicy policy = small_policy(3);
  CriticPair pair(affine(3, 2, std::vector<double>(6, 0.0), {0.0, 0.0}), 5e-3, 1e-2);
  for (int k = 0; k < 3000; ++k) kl_td_update(pair, b, policy, 0.0, rng);
  const GaussianBatch z = critic_forward_batch(pair.online, b.obs, b.actions);
  double worst = 0.0;
  for (int j = 0; j < 64; ++j) worst = std::max(worst, std::abs(z.mean[j] - b.rewards[j]));
  CHECK(worst < 1e-2);
}

TEST_CASE("KL-TD gradient matches central differences") {
  Rng rng = make_stream(64, 0);
  const Network target(critic_spec(2, 1, {4}), rng);
  Network w(critic_spec(2, 1, {4}), rng);
  const BetaPolicy policy = small_policy(4);
  const TransitionBatch b = random_batch(8, rng, 0.25);
  const Rng seed = make_stream(65, 0);
  Rng r = seed;
  w.params.zero_grad();
  kl_td_loss_and_grad(w, target, b, policy, 0.9, r);
  const ParamStorage analytic = w.params.grads;
  Network probe = w;
  const auto numeric = oracle_ref::numeric_gradient(probe.params, [&] {
    Rng rr = seed;
    return kl_td_loss_and_grad(probe, target, b, policy, 0.9, rr);
  });
  CHECK(oracle_ref::relative_error(analytic, numeric) < 1e-6);
}

TEST_CASE("sampled values have the model moments") {
  const Network w = affine(3, 2, {0.0, 0.0, 1.0, 0.0, 0.0, 0.0}, {1.0, 0.5});
  Rng rng = make_stream(66, 0);
  const std::vector<double> s = sample_value_vector(w, std::vector<double>{0.0, 0.0},
                                                    std::vector<double>{0.5}, 200000, rng);
  const GaussianValue z = critic_forward(w, std::vector<double>{0.0, 0.0},
                                         std::vector<double>{0.5});
  oracle_ref::Moments m;
  for (double v : s) m.add(v);
  CHECK(std::abs(m.mean - z.mean) < 4.0 * m.stderr_of_mean());
  CHECK(std::sqrt(m.variance()) == doctest::Approx(z.stddev).epsilon(1e-2));

  GaussianBatch batch;
  batch.mean = Eigen::Vector2d(-1.0, 3.0);
  batch.stddev = Eigen::Vector2d(0.1, 2.0);
  const Eigen::MatrixXd draws = sample_value_matrix(batch, 100000, rng);
  CHECK(draws.rows() == 100000);
  CHECK(draws.cols() == 2);
  for (int j = 0; j < 2; ++j) {
    const double mean = draws.col(j).mean();
    CHECK(std::abs(mean - batch.mean[j]) < 4.0 * batch.stddev[j] / std::sqrt(1e5));
  }
  CHECK_THROWS_AS(sample_value_vector(w, std::vector<double>{0.0, 0.0},
                                      std::vector<double>{0.5}, 0, rng),
                  std::invalid_argument);
}

TEST_CASE("cross-entropy at a centered target") {
  // Targets at the model mean: the loss is the log normalizer plus one half
  // of the mean squared standardized deviation.
  const Network w = affine(3, 2, std::vector<double>(6, 0.0), {1.0, 0.0});
  const double sd = std::log(2.0) + kSigmaFloor;
  Eigen::MatrixXd targets(2, 1);
  targets << 1.0 - sd, 1.0 + sd;
  Network probe = w;
  probe.params.zero_grad();
  const double loss = cross_entropy_loss_and_grad(probe, Batch::Zero(2, 1),
                                                  Batch::Zero(1, 1), targets);
  CHECK(loss == doctest::Approx(std::log(sd * std::sqrt(2.0 * M_PI)) + 0.5).epsilon(1e-12));
  // Mean gradient cancels for symmetric targets.
  CHECK(std::abs(probe.params.grads[6]) < 1e-14);
}

TEST_CASE("cross-entropy training recovers the sample mean and deviation") {
  Rng rng = make_stream(67, 0);
  Eigen::MatrixXd targets(50, 1);
  for (int i = 0; i < 50; ++i) targets(i, 0) = 2.0 + 0.7 * standard_normal(rng);
  const double mean = targets.col(0).mean();
  const double sd = std::sqrt((targets.col(0).array() - mean).square().mean());
  CriticPair pair(affine(3, 2, std::vector<double>(6, 0.0), {0.0, 0.0}), 5e-3, 1e-2);
  const Batch obs = Batch::Zero(2, 1);
  const Batch act = Batch::Zero(1, 1);
  for (int k = 0; k < 5000; ++k) cross_entropy_update(pair, obs, act, targets);
  const GaussianValue z = critic_forward(pair.online, std::vector<double>{0.0, 0.0},
                                         std::vector<double>{0.0});
  CHECK(std::abs(z.mean - mean) < 1e-3);
  CHECK(std::abs(z.stddev - sd) < 1e-3);
}

TEST_CASE("cross-entropy gradient matches central differences") {
  Rng rng = make_stream(68, 0);
  Network w(critic_spec(2, 1, {4}), rng);
  const TransitionBatch b = random_batch(5, rng, 0.0);
  Eigen::MatrixXd targets(3, 5);
  for (int i = 0; i < targets.size(); ++i) targets.data()[i] = standard_normal(rng);
  w.params.zero_grad();
  cross_entropy_loss_and_grad(w, b.obs, b.actions, targets);
  const ParamStorage analytic = w.params.grads;
  Network probe = w;
  const auto numeric = oracle_ref::numeric_gradient(probe.params, [&] {
    return cross_entropy_loss_and_grad(probe, b.obs, b.actions, targets);
  });
  CHECK(oracle_ref::relative_error(analytic, numeric) < 1e-6);
  CHECK_THROWS_AS(cross_entropy_loss_and_grad(w, b.obs, b.actions, Eigen::MatrixXd(3, 4)),
                  std::invalid_argument);
}

}
