#include <cmath>
#include <sstream>

#include "doctest.h"
#include "dpo/environments.hpp"
#include "dpo/estimators.hpp"
#include "dpo/tabular_mdp.hpp"
#include "oracles.hpp"

using namespace dpo;

TEST_SUITE("environments") {

TEST_CASE("point mass rests at the origin") {
  PointMass2D env;
  Rng rng = make_stream(20, 0);
  EnvState s;
  s.x = {0.0, 0.0, 0.0, 0.0};
  const StepResult r = env.step(s, std::vector<double>{0.0, 0.0}, rng);
  CHECK(r.next.x == s.x);
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.terminal);
}

TEST_CASE("pendulum upright without torque earns the best reward") {
  Pendulum1D env;
  Rng rng = make_stream(21, 0);
  EnvState s;
  s.x = {0.0, 0.0};
  const StepResult r = env.step(s, std::vector<double>{0.0}, rng);
  CHECK(r.reward == 0.0);
  CHECK(r.next.x[0] == 0.0);
  const std::vector<double> o = env.observe(s);
  CHECK(o == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("out-of-bounds actions are rejected") {
  for (const std::string name : {"pointmass", "pendulum", "lqr1d"}) {
    const auto env = make_env(name);
    Rng rng = make_stream(22, 0);
    const EnvState s = env->reset(rng);
    std::vector<double> a(env->action_dim(), env->bounds().upper[0] + 0.5);
    CHECK_THROWS_AS(env->step(s, a, rng), std::invalid_argument);
  }
  CHECK_THROWS_AS(make_env("cartpole"), std::invalid_argument);
}

TEST_CASE("seeded rollouts replay bit for bit") {
  for (const std::string name : {"pointmass", "pendulum", "lqr1d"}) {
    const auto env = make_env(name);
    auto roll = [&] {
      Rng rng = make_stream(23, 0);
      Rng act = make_stream(23, 1);
      std::vector<double> trace;
      EnvState s = env->reset(rng);
      for (int t = 0; t < 1000; ++t) {
        std::vector<double> a(env->action_dim());
        for (std::size_t i = 0; i < a.size(); ++i) {
          a[i] = env->bounds().lower[i] + env->bounds().scale(i) * uniform01(act);
        }
        const StepResult r = env->step(s, a, rng);
        trace.push_back(r.reward);
        for (double v : env->observe(r.next)) trace.push_back(v);
        s = (r.terminal || r.truncated) ? env->reset(rng) : r.next;
      }
      return trace;
    };
    const auto a = roll();
    const auto b = roll();
    CHECK(a == b);
  }
}

TEST_CASE("truncation at the horizon is not a terminal") {
  Lqr1D env;
  Rng rng = make_stream(24, 0);
  EnvState s = env.reset(rng);
  StepResult r;
  for (int t = 0; t < env.horizon(); ++t) {
    r = env.step(s, std::vector<double>{0.0}, rng);
    if (t + 1 < env.horizon()) CHECK_FALSE(r.truncated);
    s = r.next;
  }
  CHECK(r.truncated);
  CHECK_FALSE(r.terminal);
}

TEST_CASE("truncated and terminal endings differ exactly when the bootstrap is nonzero") {
  RolloutArrays a;
  a.rewards = {1.0, 0.5};
  a.baselines = {0.2, 0.1};
  a.critic_values = {0.3, 0.7, 2.0};
  a.gamma = 0.9;
  a.lambda = 0.8;
  a.terminal_flags = {0, 0, 0};
  RolloutArrays term = a;
  term.terminal_flags = {0, 0, 1};
  CHECK(uae(a) != uae(term));
  a.critic_values[2] = 0.0;
  term.critic_values[2] = 0.0;
  CHECK(uae(a) == uae(term));
}

TEST_CASE("observations stay finite and rewards within the declared bound") {
  for (const std::string name : {"pointmass", "pendulum", "lqr1d"}) {
    const auto env = make_env(name);
    Rng rng = make_stream(25, 0);
    EnvState s = env->reset(rng);
    double worst = 0.0;
    for (int t = 0; t < 1000000; ++t) {
      std::vector<double> a(env->action_dim());
      for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = uniform01(rng) < 0.2 ? (uniform01(rng) < 0.5 ? env->bounds().lower[i] : env->bounds().upper[i])
                                    : env->bounds().lower[i] + env->bounds().scale(i) * uniform01(rng);
      }
      const StepResult r = env->step(s, a, rng);
      worst = std::max(worst, std::abs(r.reward));
      for (double v : env->observe(r.next)) REQUIRE(std::isfinite(v));
      s = r.truncated ? env->reset(rng) : r.next;
    }
    CHECK(worst <= env->reward_bound());
  }
}

TEST_CASE("lqr optimum agrees with a numerically minimized controller") {
  Lqr1D env;
  const double ref = oracle_ref::lqr_best_return(Lqr1D::kA, Lqr1D::kB, Lqr1D::kStateCost,
                                                 Lqr1D::kActionCost, Lqr1D::kNoise,
                                                 Lqr1D::kInitRange * Lqr1D::kInitRange / 3.0,
                                                 env.horizon());
  CHECK(lqr_optimal_return(env) == doctest::Approx(ref).epsilon(1e-9));
}

TEST_CASE("tabular episodes") {
  SUBCASE("deterministic chain") {
    TabularMDP m;
    m.n_states = 3;
    m.n_actions = 1;
    m.gamma = 0.9;
    m.P = {{{0, 1, 0}}, {{0, 0, 1}}, {{1, 0, 0}}};
    m.r = {{1.0}, {2.0}, {3.0}};
    m.rho0 = {1, 0, 0};
    m.validate();
    Rng rng = make_stream(26, 0);
    const auto ep = mdp_sample_episode(m, {{1.0}, {1.0}, {1.0}}, 5, rng);
    REQUIRE(ep.size() == 5);
    const int want[] = {0, 1, 2, 0, 1};
    for (int t = 0; t < 5; ++t) CHECK(ep[t].s == want[t]);
    CHECK(ep[2].r == 3.0);
  }
  SUBCASE("single state") {
    TabularMDP m;
    m.n_states = 1;
    m.n_actions = 2;
    m.gamma = 0.5;
    m.P = {{{1.0}, {1.0}}};
    m.r = {{0.0, 1.0}};
    m.rho0 = {1.0};
    Rng rng = make_stream(27, 0);
    const auto ep = mdp_sample_episode(m, {{0.25, 0.75}}, 20000, rng);
    double ones = 0.0;
    for (const MdpStep& st : ep) {
      CHECK(st.s == 0);
      ones += st.a;
    }
    CHECK(std::abs(ones / 20000 - 0.75) < 4.0 * std::sqrt(0.75 * 0.25 / 20000));
  }
}

TEST_CASE("state visits follow powers of the chain") {
  const TabularMDP m = fixture_mdp(1);
  const TabularPolicy pi = fixture_policy(1);
  const int horizon = 4;
  Rng rng = make_stream(28, 0);
  std::vector<double> count(m.n_states, 0.0);
  const int episodes = 100000;
  for (int e = 0; e < episodes; ++e) {
    count[mdp_sample_episode(m, pi, horizon, rng).back().s] += 1.0;
  }
  std::vector<double> dist = m.rho0;
  for (int t = 0; t + 1 < horizon; ++t) {
    std::vector<double> nxt(m.n_states, 0.0);
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a)
        for (int s2 = 0; s2 < m.n_states; ++s2) nxt[s2] += dist[s] * pi[s][a] * m.P[s][a][s2];
    dist = nxt;
  }
  for (int s = 0; s < m.n_states; ++s) {
    const double p = count[s] / episodes;
    CHECK(std::abs(p - dist[s]) < 3.0 * std::sqrt(dist[s] * (1 - dist[s]) / episodes) + 1e-12);
  }
}

TEST_CASE("mdp text format round trips") {
  Rng rng = make_stream(29, 0);
  const TabularMDP m = random_mdp(4, 3, 0.95, rng);
  std::stringstream ss;
  write_mdp(ss, m);
  CHECK(ss.str().rfind("tabular 4 3 ", 0) == 0);
  CHECK(read_mdp(ss) == m);
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 3; ++a) {
      double sum = 0.0;
      for (double p : m.P[s][a]) sum += p;
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("stored fixtures match the generators") {
  for (int i = 0; i < kFixtureCount; ++i) {
    const TabularMDP stored = load_mdp(std::string(DPO_FIXTURE_DIR) + "/" + fixture_file_name(i));
    CHECK(stored == fixture_mdp(i));
  }
  CHECK(fixture_mdp(0).n_states == 3);
}

}
