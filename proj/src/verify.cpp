#include "dpo/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dpo/baseline.hpp"
#include "dpo/beta_policy.hpp"
#include "dpo/critic.hpp"
#include "dpo/distributions.hpp"
#include "dpo/estimators.hpp"
#include "dpo/policy.hpp"
#include "dpo/tabular_mdp.hpp"

namespace dpo {

namespace {

CheckResult at_most(const std::string& name, double stat, double threshold) {
  return {name, stat, threshold, stat <= threshold};
}

CheckResult below(const std::string& name, double stat, double threshold) {
  return {name, stat, threshold, stat < threshold};
}

std::string tagged(const char* base, int i) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s [mdp %d]", base, i);
  return buf;
}

RolloutArrays random_rollout(Rng& rng) {
  RolloutArrays a;
  const int t = 1 + static_cast<int>(uniform01(rng) * 64.0);
  a.gamma = uniform01(rng);
  a.lambda = uniform01(rng);
  a.rewards.resize(t);
  a.baselines.resize(t);
  a.critic_values.resize(t + 1);
  a.terminal_flags.assign(t + 1, 0);
  for (int i = 0; i < t; ++i) {
    a.rewards[i] = standard_normal(rng);
    a.baselines[i] = standard_normal(rng);
  }
  for (int i = 0; i <= t; ++i) {
    a.critic_values[i] = standard_normal(rng);
    if (i > 0) a.terminal_flags[i] = uniform01(rng) < 0.1 ? 1 : 0;
  }
  return a;
}

Batch random_batch(int rows, int cols, Rng& rng) {
  Batch b(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) b(i, j) = standard_normal(rng);
  }
  return b;
}

std::vector<CheckResult> estimator_suite(Rng& rng) {
  std::vector<CheckResult> out;
  double worst_gae = 0.0;
  double worst_sarsa = 0.0;
  for (int k = 0; k < 1000; ++k) {
    RolloutArrays a = random_rollout(rng);
    const std::vector<double> v = a.critic_values;
    RolloutArrays g = a;
    g.baselines.assign(v.begin(), v.end() - 1);
    const auto u = uae(g);
    const auto e = gae(g.rewards, v, g.terminal_flags, g.gamma, g.lambda);
    for (std::size_t i = 0; i < u.size(); ++i) worst_gae = std::max(worst_gae, std::abs(u[i] - e[i]));
    const auto ua = uae(a);
    const auto lr = lambda_return_q(a.rewards, a.critic_values, a.terminal_flags, a.gamma, a.lambda);
    for (std::size_t i = 0; i < ua.size(); ++i) {
      worst_sarsa = std::max(worst_sarsa, std::abs(ua[i] - (lr[i] - a.baselines[i])));
    }
  }
  out.push_back(at_most("uae with Q=V, b=V equals gae", worst_gae, 1e-12));
  out.push_back(at_most("uae equals lambda-return minus baseline", worst_sarsa, 1e-10));

  for (int f = 0; f < kFixtureCount; ++f) {
    const TabularMDP mdp = fixture_mdp(f);
    const TabularPolicy pi = fixture_policy(f);
    std::vector<double> b(static_cast<std::size_t>(mdp.n_states));
    for (double& x : b) x = standard_normal(rng);
    for (PsiChoice psi : {PsiChoice::kQ, PsiChoice::kV}) {
      for (int n = 1; n <= 3; ++n) {
        const Proposition1Report r = verify_proposition1(mdp, pi, b, n, psi, 100000, rng);
        char name[96];
        std::snprintf(name, sizeof(name), "n-step unbiasedness n=%d psi=%s [mdp %d]", n,
                      psi == PsiChoice::kQ ? "Q" : "V", f);
        out.push_back(below(name, r.max_abs_z, 4.0));
      }
    }
  }
  return out;
}

std::vector<CheckResult> baseline_suite() {
  std::vector<CheckResult> out;
  for (int f = 0; f < kFixtureCount; ++f) {
    const TabularMDP mdp = fixture_mdp(f);
    const TabularPolicy pi = fixture_policy(f);
    const ExactValues ex = solve_q(mdp, pi);
    double worst_gap = 0.0;
    double worst_excess = -std::numeric_limits<double>::infinity();
    double worst_cv = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      const double bstar = optimal_baseline(mdp, pi, ex, s);
      const auto [lo, hi] = std::minmax_element(ex.Q[s].begin(), ex.Q[s].end());
      double best_b = *lo - 1.0;
      double best_v = std::numeric_limits<double>::infinity();
      const long steps = std::lround((*hi - *lo + 2.0) / 1e-4);
      for (long k = 0; k <= steps; ++k) {
        const double b = *lo - 1.0 + 1e-4 * static_cast<double>(k);
        const double v = per_state_gradient_variance(pi, ex, s, b);
        if (v < best_v) {
          best_v = v;
          best_b = b;
        }
      }
      worst_gap = std::max(worst_gap, std::abs(best_b - bstar));
      const double v_star = per_state_gradient_variance(pi, ex, s, bstar);
      worst_excess = std::max({worst_excess,
                               v_star - per_state_gradient_variance(pi, ex, s, ex.V[s]),
                               v_star - per_state_gradient_variance(pi, ex, s, 0.0)});
      const double cv_b = ex.V[s] + 1.0;
      const double a_star = control_variate_coefficient(pi, ex, s, cv_b);
      double best_a = 0.0;
      double best_av = std::numeric_limits<double>::infinity();
      for (double a = a_star - 1.0; a <= a_star + 1.0; a += 1e-4) {
        const double v = control_variate_variance(pi, ex, s, cv_b, a);
        if (v < best_av) {
          best_av = v;
          best_a = a;
        }
      }
      worst_cv = std::max(worst_cv, std::abs(best_a - a_star));
    }
    out.push_back(at_most(tagged("optimal baseline matches grid minimizer", f), worst_gap, 1e-3));
    out.push_back(at_most(tagged("optimal baseline variance minus min(V, 0) variance", f),
                          worst_excess, 1e-12));
    out.push_back(at_most(tagged("control variate coefficient matches grid", f), worst_cv, 1e-3));
  }
  return out;
}

std::vector<CheckResult> critic_suite(Rng& rng) {
  std::vector<CheckResult> out;
  double worst_kl = 0.0;
  double worst_grad = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double s = 0.05 + 3.0 * uniform01(rng);
    const GaussianValue p{3.0 * standard_normal(rng), s};
    const GaussianValue q{3.0 * standard_normal(rng), s};
    const double mse = (p.mean - q.mean) * (p.mean - q.mean) / (2.0 * s * s);
    worst_kl = std::max(worst_kl, std::abs(gaussian_kl(p, q) - mse));
    const double d = gaussian_kl_grad(p, q).d_mean;
    worst_grad = std::max(worst_grad, std::abs(d - (q.mean - p.mean) / (s * s)));
  }
  out.push_back(at_most("equal-stddev KL equals scaled squared error", worst_kl, 1e-12));
  out.push_back(at_most("equal-stddev KL gradient equals squared-error gradient", worst_grad, 1e-12));

  for (int f = 0; f < kFixtureCount; ++f) {
    const ContractionReport c = verify_contraction(fixture_mdp(f), fixture_policy(f), 100, rng);
    out.push_back(at_most(tagged("mean contraction ratio minus gamma", f),
                          c.worst_mean_ratio - fixture_mdp(f).gamma, 1e-9));
    out.push_back(at_most(tagged("variance contraction ratio minus gamma^2", f),
                          c.worst_var_ratio - fixture_mdp(f).gamma * fixture_mdp(f).gamma, 1e-9));
  }

  const ActionBounds bounds({-2.0}, {1.0});
  BetaPolicy policy(2, bounds, {3}, rng);
  Network w(critic_spec(2, 1, {3}), rng);
  Network target(critic_spec(2, 1, {3}), rng);
  TransitionBatch tb;
  tb.obs = random_batch(2, 6, rng);
  tb.actions.resize(1, 6);
  tb.rewards.resize(6);
  for (int j = 0; j < 6; ++j) {
    tb.actions(0, j) = -2.0 + 3.0 * uniform01(rng);
    tb.rewards[j] = standard_normal(rng);
  }
  tb.next_obs = random_batch(2, 6, rng);
  tb.terminals = Eigen::VectorXi::Zero(6);
  tb.terminals[2] = 1;
  const Rng frozen = rng;
  const double kl_err = gradient_relative_error(w.params, [&] {
    Rng r = frozen;
    return kl_td_loss_and_grad(w, target, tb, policy, 0.9, r);
  });
  out.push_back(below("KL temporal-difference loss gradient", kl_err, 1e-4));
  const Eigen::MatrixXd targets = random_batch(5, 6, rng);
  const double ce_err = gradient_relative_error(
      w.params, [&] { return cross_entropy_loss_and_grad(w, tb.obs, tb.actions, targets); });
  out.push_back(below("cross-entropy loss gradient", ce_err, 1e-4));
  return out;
}

std::vector<CheckResult> policy_suite(Rng& rng) {
  std::vector<CheckResult> out;
  const ActionBounds bounds({-1.0, 0.0}, {1.0, 3.0});
  BetaPolicy policy(3, bounds, {4}, rng);
  OnPolicyMinibatch mb;
  mb.obs = random_batch(3, 8, rng);
  const PolicyDraw draw = policy.sample(mb.obs, rng);
  mb.unit = draw.unit;
  mb.old_log_prob = policy.log_prob(mb.obs, mb.unit);
  for (Eigen::Index i = 0; i < 8; ++i) mb.old_log_prob[i] += 0.3 * standard_normal(rng);
  mb.advantages = Eigen::VectorXd(8);
  for (Eigen::Index i = 0; i < 8; ++i) mb.advantages[i] = standard_normal(rng);
  for (Learner l : {Learner::kPpo, Learner::kA2c, Learner::kTrpo}) {
    const double err = gradient_relative_error(policy.params(), [&] {
      return -on_policy_surrogate(l, policy, mb, 0.2);
    });
    out.push_back(below(learner_name(l) + " surrogate gradient", err, 1e-4));
  }

  Network critic(critic_spec(3, 2, {4}), rng);
  Network phi(residual_spec(3, 2, {4}), rng);
  const Rng frozen = rng;
  const double b_err = gradient_relative_error(phi.params, [&] {
    Rng r = frozen;
    return baseline_loss_and_grad(phi, critic, policy, mb.obs, draw.action, 5, r);
  });
  out.push_back(below("residual baseline loss gradient", b_err, 1e-4));

  // Off-policy estimator against an importance-weighted objective on common samples.
  {
    const int n = 100000;
    const Batch obs = random_batch(3, 1, rng).replicate(1, n);
    const PolicyDraw d = policy.sample(obs, rng);
    const Eigen::VectorXd base = Eigen::VectorXd::Constant(
        n, critic_forward_batch(critic, obs.leftCols(1), d.action.leftCols(1)).mean[0]);
    const double alpha = 0.03;
    const Eigen::VectorXd lp0 = policy.log_prob(obs, d.unit);
    const Eigen::VectorXd q = critic_forward_batch(critic, obs, d.action).mean;
    policy.params().zero_grad();
    off_policy_surrogate_given(policy, critic, obs, d.unit, base, alpha);
    const ParamStorage g = policy.params().grads;
    policy.params().zero_grad();
    std::vector<double> dir(g.size());
    for (double& x : dir) x = standard_normal(rng);
    const auto objective = [&](double eps) {
      BetaPolicy moved = policy;
      for (std::size_t i = 0; i < dir.size(); ++i) moved.params().values[i] += eps * dir[i];
      const Eigen::VectorXd lp = moved.log_prob(obs, d.unit);
      double j = 0.0;
      for (int i = 0; i < n; ++i) {
        j += std::exp(lp[i] - lp0[i]) * (positive_advantage(q[i], base[i]) - alpha * lp[i]);
      }
      return j / n;
    };
    const double h = 1e-5;
    const double numeric = (objective(h) - objective(-h)) / (2.0 * h);
    double analytic = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) analytic -= g[i] * dir[i];
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-12);
    out.push_back(below("off-policy score-function gradient (common samples)", rel, 1e-2));
  }

  // Clamp: a critic that never exceeds the baseline leaves no gradient.
  {
    Network flat(critic_spec(3, 2, {4}), rng);
    std::fill(flat.params.values.begin(), flat.params.values.end(), 0.0);
    const Batch obs = random_batch(3, 64, rng);
    const PolicyDraw d = policy.sample(obs, rng);
    Eigen::VectorXd base(64);
    for (Eigen::Index i = 0; i < 64; ++i) base[i] = std::abs(standard_normal(rng));
    policy.params().zero_grad();
    off_policy_surrogate_given(policy, flat, obs, d.unit, base, 0.0);
    double mx = 0.0;
    for (double x : policy.params().grads) mx = std::max(mx, std::abs(x));
    policy.params().zero_grad();
    out.push_back(at_most("clamped off-policy gradient magnitude", mx, 0.0));
  }

  // Log-likelihood differences do not depend on the action bounds.
  {
    const ActionBounds unit_box({0.0, 0.0}, {1.0, 1.0});
    BetaPolicy other(3, bounds, {4}, rng);
    double worst = 0.0;
    const Batch obs = random_batch(3, 10000, rng);
    const PolicyDraw d = policy.sample(obs, rng);
    const Eigen::VectorXd a1 = policy.log_prob(obs, d.unit) - other.log_prob(obs, d.unit);
    const BetaPolicy p_unit(policy.network(), unit_box);
    const BetaPolicy o_unit(other.network(), unit_box);
    const Eigen::VectorXd a0 = p_unit.log_prob(obs, d.unit) - o_unit.log_prob(obs, d.unit);
    worst = (a1 - a0).cwiseAbs().maxCoeff();
    out.push_back(at_most("bound transform leaves log-likelihood differences", worst, 1e-12));
  }
  return out;
}

std::vector<CheckResult> theorem_suite(Rng& rng) {
  std::vector<CheckResult> out;
  const TabularMDP mdp = fixture_mdp(0);
  const TabularPolicy pi = fixture_policy(0);
  const ExactValues ex = solve_q(mdp, pi);
  std::vector<double> b_off(ex.V);
  for (double& x : b_off) x += 1.5 * standard_normal(rng);
  const double lambda = 0.95;
  const Theorem1Report rv = verify_theorem1(mdp, pi, b_off, lambda, PsiChoice::kV, 400000, rng);
  out.push_back(at_most("variance gap, psi=V, b!=V (|z|)", std::abs(rv.z), 3.0));
  const Theorem1Report rq = verify_theorem1(mdp, pi, ex.V, lambda, PsiChoice::kQ, 400000, rng);
  out.push_back(at_most("variance gap, psi=Q, b=V (|z|)", std::abs(rq.z), 3.0));
  std::vector<double> b_star(static_cast<std::size_t>(mdp.n_states));
  for (int s = 0; s < mdp.n_states; ++s) b_star[s] = optimal_baseline(mdp, pi, ex, s);
  const Theorem1Report rs = verify_theorem1(mdp, pi, b_star, lambda, PsiChoice::kV, 400000, rng);
  out.push_back(at_most("variance gap with optimal baseline (lhs / 3se)",
                        rs.lhs / (3.0 * rs.lhs_stderr), 1.0));
  for (int f = 0; f < kFixtureCount; ++f) {
    const ContractionReport c = verify_contraction(fixture_mdp(f), fixture_policy(f), 100, rng);
    out.push_back({tagged("distributional sweep contracts", f),
                   std::max(c.worst_mean_ratio, c.worst_var_ratio), fixture_mdp(f).gamma,
                   c.passed});
  }
  return out;
}

}  // namespace

double gradient_relative_error(ParamVector& params,
                               const std::function<double()>& loss_and_grad,
                               double step) {
  params.zero_grad();
  loss_and_grad();
  const ParamStorage analytic = params.grads;
  std::vector<double> numeric(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params.values[i];
    params.values[i] = keep + step;
    const double up = loss_and_grad();
    params.values[i] = keep - step;
    const double down = loss_and_grad();
    params.values[i] = keep;
    numeric[i] = (up - down) / (2.0 * step);
  }
  params.zero_grad();
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"estimators", "baseline", "critic",
                                                 "policy",     "theorems", "all"};
  return names;
}

std::vector<CheckResult> run_suite(const std::string& name, std::uint64_t seed) {
  Rng rng = make_stream(seed, 200);
  if (name == "estimators") return estimator_suite(rng);
  if (name == "baseline") return baseline_suite();
  if (name == "critic") return critic_suite(rng);
  if (name == "policy") return policy_suite(rng);
  if (name == "theorems") return theorem_suite(rng);
  if (name == "all") {
    std::vector<CheckResult> all;
    for (const std::string& s : suite_names()) {
      if (s == "all") continue;
      const auto part = run_suite(s, seed);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  throw std::invalid_argument("unknown suite: " + name);
}

}  // namespace dpo
