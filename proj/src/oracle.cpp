#include "dpo/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include <Eigen/Dense>

#include "dpo/estimators.hpp"

namespace dpo {

namespace {

// Streaming mean and variance.
struct Moments {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double variance() const { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
  double stderr_of_mean() const { return std::sqrt(variance() / n); }
};

double psi_value(const ExactValues& exact, PsiChoice psi, int s, int a) {
  return psi == PsiChoice::kQ ? exact.Q[s][a] : exact.V[s];
}

// Visitation-weighted distribution over (s, a), flattened as s * A + a.
std::vector<double> state_action_weights(const TabularMDP& mdp,
                                         const TabularPolicy& policy,
                                         const ExactValues& exact) {
  const std::vector<double> rho = exact.normalized_visitation();
  std::vector<double> w(static_cast<std::size_t>(mdp.n_states * mdp.n_actions));
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      w[s * mdp.n_actions + a] = rho[s] * policy[s][a];
    }
  }
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

// One suffix from (s0, a0): states s_0..s_H, actions a_0..a_H, rewards
// r_0..r_{H-1}; advantage at index 0 under the spec.
struct Suffix {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;
};

Suffix sample_suffix(const TabularMDP& mdp, const TabularPolicy& policy, int s0,
                     int a0, int horizon, Rng& rng) {
  Suffix out;
  out.states.reserve(static_cast<std::size_t>(horizon) + 1);
  out.actions.reserve(static_cast<std::size_t>(horizon) + 1);
  out.rewards.reserve(static_cast<std::size_t>(horizon));
  int s = s0;
  int a = a0;
  for (int k = 0; k < horizon; ++k) {
    out.states.push_back(s);
    out.actions.push_back(a);
    out.rewards.push_back(mdp.r[s][a]);
    s = sample_categorical(mdp.P[s][a], rng);
    a = sample_categorical(policy[s], rng);
  }
  out.states.push_back(s);
  out.actions.push_back(a);
  return out;
}

RolloutArrays arrays_for(const Suffix& suffix, const ExactValues& exact,
                         PsiChoice psi, const std::vector<double>& b,
                         double gamma, double lambda) {
  RolloutArrays arr;
  const std::size_t h = suffix.rewards.size();
  arr.rewards = suffix.rewards;
  arr.critic_values.resize(h + 1);
  arr.baselines.resize(h);
  arr.terminal_flags.assign(h + 1, 0);
  for (std::size_t k = 0; k <= h; ++k) {
    arr.critic_values[k] =
        psi_value(exact, psi, suffix.states[k], suffix.actions[k]);
    if (k < h) arr.baselines[k] = b[suffix.states[k]];
  }
  arr.gamma = gamma;
  arr.lambda = lambda;
  return arr;
}

double uae_head(const Suffix& suffix, const ExactValues& exact, PsiChoice psi,
                const std::vector<double>& b, double gamma, double lambda) {
  return uae(arrays_for(suffix, exact, psi, b, gamma, lambda))[0];
}

double gae_head(const Suffix& suffix, const ExactValues& exact, double gamma,
                double lambda) {
  const std::size_t h = suffix.rewards.size();
  std::vector<double> v(h + 1);
  for (std::size_t k = 0; k <= h; ++k) v[k] = exact.V[suffix.states[k]];
  return gae(suffix.rewards, v, std::vector<int>(h + 1, 0), gamma, lambda)[0];
}

void check_baseline_table(const TabularMDP& mdp, const std::vector<double>& b) {
  if (b.size() != static_cast<std::size_t>(mdp.n_states)) {
    throw std::invalid_argument("baseline table needs one entry per state");
  }
}

}  // namespace

TabularPolicy TabularSoftmaxPolicy::probabilities() const {
  TabularPolicy pi(logits.size());
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const double mx = *std::max_element(logits[s].begin(), logits[s].end());
    double z = 0.0;
    pi[s].resize(logits[s].size());
    for (std::size_t a = 0; a < logits[s].size(); ++a) {
      pi[s][a] = std::exp(logits[s][a] - mx);
      z += pi[s][a];
    }
    for (double& p : pi[s]) p /= z;
  }
  return pi;
}

TabularSoftmaxPolicy TabularSoftmaxPolicy::from_probabilities(
    const TabularPolicy& policy) {
  TabularSoftmaxPolicy out;
  out.logits = policy;
  for (auto& row : out.logits) {
    for (double& v : row) v = std::log(v);
  }
  return out;
}

double score_sq_norm(const TabularPolicy& policy, int s, int a) {
  double sum_sq = 0.0;
  for (double p : policy[s]) sum_sq += p * p;
  return 1.0 - 2.0 * policy[s][a] + sum_sq;
}

std::vector<double> ExactValues::normalized_visitation() const {
  double total = 0.0;
  for (double v : visitation) total += v;
  std::vector<double> out = visitation;
  for (double& v : out) v /= total;
  return out;
}

ExactValues solve_q(const TabularMDP& mdp, const TabularPolicy& policy) {
  mdp.validate();
  validate_policy(mdp, policy);
  const int ns = mdp.n_states;
  const int na = mdp.n_actions;
  const int n = ns * na;
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd r(n);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      const int row = s * na + a;
      r[row] = mdp.r[s][a];
      for (int s2 = 0; s2 < ns; ++s2) {
        for (int a2 = 0; a2 < na; ++a2) {
          m(row, s2 * na + a2) -= mdp.gamma * mdp.P[s][a][s2] * policy[s2][a2];
        }
      }
    }
  }
  const Eigen::VectorXd q = m.fullPivLu().solve(r);
  if (!q.allFinite()) throw std::runtime_error("singular Bellman system");

  ExactValues out;
  out.Q.assign(static_cast<std::size_t>(ns), std::vector<double>(static_cast<std::size_t>(na)));
  out.V.assign(static_cast<std::size_t>(ns), 0.0);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      out.Q[s][a] = q[s * na + a];
      out.V[s] += policy[s][a] * out.Q[s][a];
    }
  }
  // rho = rho0 + gamma P_pi^T rho
  Eigen::MatrixXd pt = Eigen::MatrixXd::Identity(ns, ns);
  for (int s = 0; s < ns; ++s) {
    for (int s2 = 0; s2 < ns; ++s2) {
      double p = 0.0;
      for (int a = 0; a < na; ++a) p += policy[s][a] * mdp.P[s][a][s2];
      pt(s2, s) -= mdp.gamma * p;
    }
  }
  const Eigen::VectorXd rho0 =
      Eigen::Map<const Eigen::VectorXd>(mdp.rho0.data(), ns);
  const Eigen::VectorXd rho = pt.fullPivLu().solve(rho0);
  out.visitation.assign(rho.data(), rho.data() + ns);
  return out;
}

double bellman_residual(const TabularMDP& mdp, const TabularPolicy& policy,
                        const Table& q) {
  double worst = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      double next = 0.0;
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
          next += mdp.P[s][a][s2] * policy[s2][a2] * q[s2][a2];
        }
      }
      worst = std::max(worst, std::abs(q[s][a] - mdp.r[s][a] - mdp.gamma * next));
    }
  }
  return worst;
}

double optimal_baseline(const TabularMDP& mdp, const TabularPolicy& policy,
                        const ExactValues& exact, int state) {
  double num = 0.0;
  double den = 0.0;
  for (int a = 0; a < mdp.n_actions; ++a) {
    const double w = policy[state][a] * score_sq_norm(policy, state, a);
    num += w * exact.Q[state][a];
    den += w;
  }
  if (!(den > 1e-15)) {
    throw std::domain_error("optimal baseline undefined: score vanishes");
  }
  return num / den;
}

double per_state_gradient_variance(const TabularPolicy& policy,
                                   const ExactValues& exact, int state, double b) {
  const auto& pi = policy[state];
  const std::size_t na = pi.size();
  double second = 0.0;
  std::vector<double> first(na, 0.0);  // E[u Q], a vector over the state's row
  for (std::size_t a = 0; a < na; ++a) {
    const double q = exact.Q[state][a];
    second += pi[a] * score_sq_norm(policy, state, static_cast<int>(a)) *
              (q - b) * (q - b);
    for (std::size_t k = 0; k < na; ++k) {
      const double u = (k == a ? 1.0 : 0.0) - pi[k];
      first[k] += pi[a] * u * q;
    }
  }
  double first_sq = 0.0;
  for (double v : first) first_sq += v * v;
  return second - first_sq;
}

double control_variate_coefficient(const TabularPolicy& policy,
                                   const ExactValues& exact, int state, double b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t a = 0; a < policy[state].size(); ++a) {
    const double w =
        policy[state][a] * score_sq_norm(policy, state, static_cast<int>(a));
    num += w * exact.Q[state][a] * b;
    den += w * b * b;
  }
  if (!(den > 0.0)) throw std::domain_error("control variate undefined");
  return num / den;
}

double control_variate_variance(const TabularPolicy& policy,
                                const ExactValues& exact, int state, double b,
                                double a) {
  return per_state_gradient_variance(policy, exact, state, a * b);
}

std::string format_check(const CheckResult& check) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-48s %14.6g %12.6g %s", check.name.c_str(),
                check.statistic, check.threshold, check.passed ? "PASS" : "FAIL");
  return buf;
}

Proposition1Report verify_proposition1(const TabularMDP& mdp,
                                       const TabularPolicy& policy,
                                       const std::vector<double>& b, int n,
                                       PsiChoice psi, int samples, Rng& rng) {
  check_baseline_table(mdp, b);
  if (n < 1 || samples < 2) throw std::invalid_argument("need n >= 1, samples >= 2");
  const ExactValues exact = solve_q(mdp, policy);
  Proposition1Report report;
  report.passed = true;
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      Moments mom;
      for (int i = 0; i < samples; ++i) {
        int st = s;
        int at = a;
        double ret = 0.0;
        double disc = 1.0;
        for (int k = 0; k < n; ++k) {
          ret += disc * mdp.r[st][at];
          disc *= mdp.gamma;
          st = sample_categorical(mdp.P[st][at], rng);
          if (psi == PsiChoice::kQ || k + 1 < n) {
            at = sample_categorical(policy[st], rng);
          }
        }
        ret += disc * psi_value(exact, psi, st, at) - b[s];
        mom.add(ret);
      }
      const double target = exact.Q[s][a] - b[s];
      const double se = mom.stderr_of_mean();
      const double diff = mom.mean - target;
      double z = 0.0;
      if (se > 0.0) {
        z = diff / se;
      } else if (std::abs(diff) > 1e-9) {
        z = std::numeric_limits<double>::infinity();
      }
      CheckResult c;
      char name[96];
      std::snprintf(name, sizeof(name), "prop1 n=%d psi=%s s=%d a=%d", n,
                    psi == PsiChoice::kQ ? "Q" : "V", s, a);
      c.name = name;
      c.statistic = std::abs(z);
      c.threshold = 4.0;
      c.passed = std::abs(z) < 4.0;
      report.passed = report.passed && c.passed;
      report.max_abs_z = std::max(report.max_abs_z, std::abs(z));
      report.checks.push_back(c);
    }
  }
  return report;
}

int truncation_horizon(double gamma, double lambda) {
  const double gl = gamma * lambda;
  if (gl <= 0.0) return 1;
  int h = 1;
  double p = gl;
  while (p >= 1e-8) {
    p *= gl;
    ++h;
    if (h > 100000) throw std::invalid_argument("gamma * lambda too close to 1");
  }
  return h;
}

void theorem1_rhs(const TabularMDP& mdp, const TabularPolicy& policy,
                  const ExactValues& exact, const std::vector<double>& b,
                  double lambda, PsiChoice psi, int horizon, double* irreducible,
                  double* reducible) {
  check_baseline_table(mdp, b);
  const int ns = mdp.n_states;
  const int na = mdp.n_actions;
  const double g = mdp.gamma;
  const std::vector<double> w0 = state_action_weights(mdp, policy, exact);

  // Squared gap between Psi and V, averaged over the policy at each state.
  std::vector<double> gap(static_cast<std::size_t>(ns), 0.0);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      const double d = psi_value(exact, psi, s, a) - exact.V[s];
      gap[s] += policy[s][a] * d * d;
    }
  }
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(ns, ns);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      for (int s2 = 0; s2 < ns; ++s2) p_pi(s, s2) += policy[s][a] * mdp.P[s][a][s2];
    }
  }
  double irr = 0.0;
  double red = 0.0;
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      const double weight = w0[s * na + a] * score_sq_norm(policy, s, a);
      const double q = exact.Q[s][a];
      const double v = exact.V[s];
      red += weight * (b[s] * b[s] - v * v - 2.0 * q * (b[s] - v));
      Eigen::RowVectorXd dist(ns);
      for (int s2 = 0; s2 < ns; ++s2) dist[s2] = mdp.P[s][a][s2];
      double series = 0.0;
      double coef = g * g * (1.0 - lambda * lambda);
      for (int l = 0; l <= horizon; ++l) {
        double d = 0.0;
        for (int s2 = 0; s2 < ns; ++s2) d += dist[s2] * gap[s2];
        series += coef * d;
        coef *= (g * lambda) * (g * lambda);
        dist = dist * p_pi;
      }
      irr += weight * series;
    }
  }
  *irreducible = irr;
  *reducible = red;
}

Theorem1Report verify_theorem1(const TabularMDP& mdp, const TabularPolicy& policy,
                               const std::vector<double>& b, double lambda,
                               PsiChoice psi, int samples, Rng& rng) {
  check_baseline_table(mdp, b);
  const int batches = 100;
  if (samples < 2 * batches) throw std::invalid_argument("too few samples");
  const ExactValues exact = solve_q(mdp, policy);
  const int ns = mdp.n_states;
  const int na = mdp.n_actions;
  const double g = mdp.gamma;
  Theorem1Report rep;
  rep.horizon = truncation_horizon(g, lambda);
  theorem1_rhs(mdp, policy, exact, b, lambda, psi, rep.horizon, &rep.irreducible,
               &rep.reducible);
  rep.rhs = rep.irreducible + rep.reducible;

  const std::vector<double> w0 = state_action_weights(mdp, policy, exact);
  const std::size_t dim = static_cast<std::size_t>(ns * na);

  struct Accumulator {
    double count = 0.0;
    double sq_u = 0.0;
    double sq_g = 0.0;
    std::vector<double> mean_u;
    std::vector<double> mean_g;
    void reset(std::size_t d) {
      count = sq_u = sq_g = 0.0;
      mean_u.assign(d, 0.0);
      mean_g.assign(d, 0.0);
    }
    double var(double sq, const std::vector<double>& sum) const {
      double norm = 0.0;
      for (double v : sum) norm += (v / count) * (v / count);
      return sq / count - norm;
    }
  };
  Accumulator all;
  Accumulator batch;
  all.reset(dim);
  batch.reset(dim);
  Moments batch_lhs;
  const int per_batch = samples / batches;
  const int used = per_batch * batches;

  for (int i = 0; i < used; ++i) {
    const int sa = sample_categorical(w0, rng);
    const int s0 = sa / na;
    const int a0 = sa % na;
    const Suffix suffix = sample_suffix(mdp, policy, s0, a0, rep.horizon, rng);
    const double au = uae_head(suffix, exact, psi, b, g, lambda);
    const double ag = gae_head(suffix, exact, g, lambda);
    const double unorm = score_sq_norm(policy, s0, a0);
    for (Accumulator* acc : {&all, &batch}) {
      acc->count += 1.0;
      acc->sq_u += unorm * au * au;
      acc->sq_g += unorm * ag * ag;
      for (int k = 0; k < na; ++k) {
        const double u = (k == a0 ? 1.0 : 0.0) - policy[s0][k];
        acc->mean_u[s0 * na + k] += u * au;
        acc->mean_g[s0 * na + k] += u * ag;
      }
    }
    if ((i + 1) % per_batch == 0) {
      batch_lhs.add(batch.var(batch.sq_u, batch.mean_u) -
                    batch.var(batch.sq_g, batch.mean_g));
      batch.reset(dim);
    }
  }
  rep.var_uae = all.var(all.sq_u, all.mean_u);
  rep.var_gae = all.var(all.sq_g, all.mean_g);
  rep.lhs = rep.var_uae - rep.var_gae;
  rep.lhs_stderr = batch_lhs.stderr_of_mean();
  const double diff = rep.lhs - rep.rhs;
  if (rep.lhs_stderr > 0.0) {
    rep.z = diff / rep.lhs_stderr;
  } else {
    rep.z = std::abs(diff) < 1e-9 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  rep.passed = std::abs(rep.z) <= 3.0;
  return rep;
}

TabularDistribution distributional_sweep(const TabularMDP& mdp,
                                         const TabularPolicy& policy,
                                         const TabularDistribution& z) {
  TabularDistribution out;
  out.mean = mdp.r;
  out.var.assign(static_cast<std::size_t>(mdp.n_states),
                 std::vector<double>(static_cast<std::size_t>(mdp.n_actions), 0.0));
  const double g = mdp.gamma;
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      double em = 0.0;
      double ev = 0.0;
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
          const double w = mdp.P[s][a][s2] * policy[s2][a2];
          em += w * z.mean[s2][a2];
          ev += w * z.var[s2][a2];
        }
      }
      out.mean[s][a] += g * em;
      out.var[s][a] = g * g * ev;
    }
  }
  return out;
}

ContractionReport verify_contraction(const TabularMDP& mdp,
                                     const TabularPolicy& policy, int pairs,
                                     Rng& rng) {
  const auto random_dist = [&]() {
    TabularDistribution z;
    z.mean.assign(static_cast<std::size_t>(mdp.n_states),
                  std::vector<double>(static_cast<std::size_t>(mdp.n_actions)));
    z.var = z.mean;
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) {
        z.mean[s][a] = 10.0 * standard_normal(rng);
        z.var[s][a] = 5.0 * uniform01(rng);
      }
    }
    return z;
  };
  const auto sup_gap = [&](const Table& x, const Table& y) {
    double m = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) m = std::max(m, std::abs(x[s][a] - y[s][a]));
    }
    return m;
  };
  ContractionReport rep;
  rep.pairs = pairs;
  for (int i = 0; i < pairs; ++i) {
    const TabularDistribution z1 = random_dist();
    const TabularDistribution z2 = random_dist();
    const TabularDistribution t1 = distributional_sweep(mdp, policy, z1);
    const TabularDistribution t2 = distributional_sweep(mdp, policy, z2);
    const double dm = sup_gap(z1.mean, z2.mean);
    const double dv = sup_gap(z1.var, z2.var);
    if (dm > 0.0) rep.worst_mean_ratio = std::max(rep.worst_mean_ratio, sup_gap(t1.mean, t2.mean) / dm);
    if (dv > 0.0) rep.worst_var_ratio = std::max(rep.worst_var_ratio, sup_gap(t1.var, t2.var) / dv);
  }
  rep.passed = rep.worst_mean_ratio <= mdp.gamma + 1e-9 &&
               rep.worst_var_ratio <= mdp.gamma * mdp.gamma + 1e-9;
  return rep;
}

VarianceDecomposition variance_decomposition(const TabularMDP& mdp,
                                             const TabularPolicy& policy,
                                             const AdvantageSpec& spec, int pairs,
                                             Rng& rng) {
  check_baseline_table(mdp, spec.b);
  if (pairs < 2) throw std::invalid_argument("need at least two pairs");
  const ExactValues exact = solve_q(mdp, policy);
  const int na = mdp.n_actions;
  const int horizon =
      spec.horizon > 0 ? spec.horizon : truncation_horizon(mdp.gamma, spec.lambda);
  const std::vector<double> w0 = state_action_weights(mdp, policy, exact);
  Moments tau;
  double cross = 0.0;
  std::vector<double> mean_vec(w0.size(), 0.0);
  for (int i = 0; i < pairs; ++i) {
    const int sa = sample_categorical(w0, rng);
    const int s0 = sa / na;
    const int a0 = sa % na;
    const Suffix t1 = sample_suffix(mdp, policy, s0, a0, horizon, rng);
    const Suffix t2 = sample_suffix(mdp, policy, s0, a0, horizon, rng);
    const double x1 = uae_head(t1, exact, spec.psi, spec.b, mdp.gamma, spec.lambda);
    const double x2 = uae_head(t2, exact, spec.psi, spec.b, mdp.gamma, spec.lambda);
    const double unorm = score_sq_norm(policy, s0, a0);
    tau.add(unorm * (x1 * x1 - x1 * x2));
    cross += unorm * x1 * x2;
    for (int k = 0; k < na; ++k) {
      const double u = (k == a0 ? 1.0 : 0.0) - policy[s0][k];
      mean_vec[s0 * na + k] += u * 0.5 * (x1 + x2);
    }
  }
  VarianceDecomposition out;
  out.pairs = pairs;
  out.sigma_tau = tau.mean;
  out.sigma_tau_stderr = tau.stderr_of_mean();
  double norm = 0.0;
  for (double v : mean_vec) norm += (v / pairs) * (v / pairs);
  out.sigma_sa = cross / pairs - norm;
  return out;
}

VarianceDecomposition variance_decomposition(const ContinuousEnv& env, int) {
  throw UnsupportedCapability(env.name() +
                              ": cannot restart from an arbitrary state-action pair");
}

double enumerate_trajectory_variance(const TabularMDP& mdp,
                                     const TabularPolicy& policy,
                                     const AdvantageSpec& spec) {
  check_baseline_table(mdp, spec.b);
  if (spec.horizon < 1) throw std::invalid_argument("enumeration needs horizon >= 1");
  const ExactValues exact = solve_q(mdp, policy);
  const int na = mdp.n_actions;
  const std::vector<double> w0 = state_action_weights(mdp, policy, exact);
  double total = 0.0;
  for (int s0 = 0; s0 < mdp.n_states; ++s0) {
    for (int a0 = 0; a0 < na; ++a0) {
      double m1 = 0.0;
      double m2 = 0.0;
      Suffix path;
      std::function<void(int, int, double)> walk = [&](int s, int a, double prob) {
        path.states.push_back(s);
        path.actions.push_back(a);
        if (static_cast<int>(path.rewards.size()) == spec.horizon) {
          const double x =
              uae_head(path, exact, spec.psi, spec.b, mdp.gamma, spec.lambda);
          m1 += prob * x;
          m2 += prob * x * x;
        } else {
          path.rewards.push_back(mdp.r[s][a]);
          for (int s2 = 0; s2 < mdp.n_states; ++s2) {
            for (int a2 = 0; a2 < na; ++a2) {
              const double p = mdp.P[s][a][s2] * policy[s2][a2];
              if (p > 0.0) walk(s2, a2, prob * p);
            }
          }
          path.rewards.pop_back();
        }
        path.states.pop_back();
        path.actions.pop_back();
      };
      walk(s0, a0, 1.0);
      total += w0[s0 * na + a0] * score_sq_norm(policy, s0, a0) * (m2 - m1 * m1);
    }
  }
  return total;
}

double variance_of_updates(const std::vector<std::vector<double>>& snapshots) {
  if (snapshots.size() < 2) throw std::invalid_argument("need at least two snapshots");
  const std::size_t n = snapshots.size() - 1;
  const std::size_t dim = snapshots[0].size();
  std::vector<std::vector<double>> deltas(n, std::vector<double>(dim));
  std::vector<double> mean(dim, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    if (snapshots[t + 1].size() != dim) {
      throw std::invalid_argument("snapshots differ in length");
    }
    for (std::size_t i = 0; i < dim; ++i) {
      deltas[t][i] = snapshots[t + 1][i] - snapshots[t][i];
      mean[i] += deltas[t][i] / static_cast<double>(n);
    }
  }
  double vpu = 0.0;
  for (const auto& d : deltas) {
    for (std::size_t i = 0; i < dim; ++i) vpu += (d[i] - mean[i]) * (d[i] - mean[i]);
  }
  return vpu / static_cast<double>(n);
}

double average_total_variation(const std::vector<double>& losses) {
  if (losses.size() < 2) throw std::invalid_argument("need at least two losses");
  const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
  const double range = *hi - *lo;
  if (range == 0.0) return 0.0;
  double tv = 0.0;
  for (std::size_t i = 0; i + 1 < losses.size(); ++i) {
    tv += std::abs(losses[i + 1] - losses[i]) / range;
  }
  return tv / static_cast<double>(losses.size() - 1);
}

StabilityMetrics stability_metrics(const std::vector<std::vector<double>>& snapshots,
                                   const std::vector<double>& losses) {
  return {variance_of_updates(snapshots), average_total_variation(losses)};
}

}  // namespace dpo
