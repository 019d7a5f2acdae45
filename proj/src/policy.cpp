#include "dpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "dpo/baseline.hpp"
#include "dpo/critic.hpp"

namespace dpo {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Mean of ratio * A without touching gradients.
double ratio_objective(const BetaPolicy& policy, const OnPolicyMinibatch& batch) {
  const Eigen::VectorXd lp = policy.log_prob(batch.obs, batch.unit);
  double j = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    j += std::exp(lp[i] - batch.old_log_prob[i]) * batch.advantages[i];
  }
  return j / static_cast<double>(lp.size());
}

void check_on_batch(const OnPolicyMinibatch& batch) {
  const Eigen::Index n = batch.obs.cols();
  if (n == 0) throw std::invalid_argument("empty on-policy minibatch");
  if (batch.old_log_prob.size() != n) {
    throw std::invalid_argument("missing stored log-likelihoods");
  }
  if (batch.advantages.size() != n || batch.unit.cols() != n) {
    throw std::invalid_argument("on-policy minibatch fields differ in length");
  }
}

}  // namespace

Learner parse_learner(const std::string& name) {
  if (name == "ppo") return Learner::kPpo;
  if (name == "a2c") return Learner::kA2c;
  if (name == "trpo") return Learner::kTrpo;
  throw std::invalid_argument("unknown learner: " + name);
}

std::string learner_name(Learner learner) {
  switch (learner) {
    case Learner::kPpo:
      return "ppo";
    case Learner::kA2c:
      return "a2c";
    case Learner::kTrpo:
      return "trpo";
  }
  return "ppo";
}

PolicyConfig PolicyConfig::for_learner(Learner learner) {
  PolicyConfig c;
  c.learner = learner;
  c.epochs_per_batch = learner == Learner::kPpo ? 10 : 1;
  return c;
}

void PolicyConfig::validate() const {
  if (!(omega >= 0.0 && omega <= 1.0)) {
    throw std::invalid_argument("omega must lie in [0, 1]");
  }
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
  if (!(ppo_clip > 0.0) || !(max_kl > 0.0) || !(damping >= 0.0)) {
    throw std::invalid_argument("clip, max_kl must be positive; damping >= 0");
  }
  if (epochs_per_batch < 1 || cg_iters < 1 || line_search_steps < 1) {
    throw std::invalid_argument("iteration counts must be positive");
  }
}

double positive_advantage(double q, double b) { return std::max(q - b, 0.0); }

double on_policy_surrogate(Learner learner, BetaPolicy& policy,
                           const OnPolicyMinibatch& batch, double ppo_clip,
                           double scale) {
  check_on_batch(batch);
  const Eigen::Index n = batch.size();
  const Eigen::VectorXd lp = policy.log_prob(batch.obs, batch.unit);
  Eigen::VectorXd weights(n);
  double j = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double adv = batch.advantages[i];
    const double ratio = std::exp(lp[i] - batch.old_log_prob[i]);
    switch (learner) {
      case Learner::kPpo: {
        const double unclipped = ratio * adv;
        const double clipped =
            std::clamp(ratio, 1.0 - ppo_clip, 1.0 + ppo_clip) * adv;
        j += std::min(unclipped, clipped);
        weights[i] = unclipped <= clipped ? ratio * adv : 0.0;
        break;
      }
      case Learner::kA2c:
        j += lp[i] * adv;
        weights[i] = adv;
        break;
      case Learner::kTrpo:
        j += ratio * adv;
        weights[i] = ratio * adv;
        break;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  weights *= -scale * inv_n;
  policy.accumulate_log_prob_grad(batch.obs, batch.unit, weights);
  return j * inv_n;
}

OffPolicyStats off_policy_surrogate_given(BetaPolicy& policy,
                                          const Network& critic, const Batch& obs,
                                          const Batch& unit,
                                          const Eigen::VectorXd& baselines,
                                          double alpha, double scale) {
  const Eigen::Index n = obs.cols();
  if (n == 0) throw std::invalid_argument("empty minibatch");
  if (baselines.size() != n || unit.cols() != n) {
    throw std::invalid_argument("off-policy inputs differ in length");
  }
  const Eigen::VectorXd lp = policy.log_prob(obs, unit);
  const Eigen::VectorXd q =
      critic_forward_batch(critic, obs, policy.to_action(unit)).mean;
  OffPolicyStats stats;
  Eigen::VectorXd weights(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a_plus = positive_advantage(q[i], baselines[i]);
    const double w = a_plus - alpha * lp[i];
    stats.objective += w * inv_n;
    stats.mean_positive_adv += a_plus * inv_n;
    weights[i] = -scale * inv_n * w;
  }
  policy.accumulate_log_prob_grad(obs, unit, weights);
  return stats;
}

OffPolicyStats off_policy_surrogate(BetaPolicy& policy, const Network& critic,
                                    const Network& phi, const Batch& obs,
                                    double alpha, int m, Rng& rng, double scale) {
  if (obs.cols() == 0) throw std::invalid_argument("empty minibatch");
  const BaselineEstimate est = estimate_baseline(phi, critic, policy, obs, m, rng);
  const PolicyDraw draw = policy.sample(obs, rng);
  OffPolicyStats stats =
      off_policy_surrogate_given(policy, critic, obs, draw.unit, est.values, alpha, scale);
  stats.mean_abs_residual = est.residuals.cwiseAbs().mean();
  return stats;
}

double grad_norm(const ParamVector& params) {
  return std::sqrt(dot(params.grads, params.grads));
}

double clip_grad_norm(ParamVector& params, double max_norm, bool* clipped) {
  const double norm = grad_norm(params);
  const bool over = norm > max_norm;
  if (over) {
    const double f = max_norm / norm;
    for (double& g : params.grads) g *= f;
  }
  if (clipped != nullptr) *clipped = over;
  return norm;
}

UpdateStats combined_update(const PolicyConfig& config, BetaPolicy& policy,
                            AdamState& adam, const OnPolicyMinibatch& batch,
                            const Network& critic, const Network& phi,
                            const Batch* replay_obs, int m, Rng& rng) {
  config.validate();
  if (config.learner == Learner::kTrpo) {
    return trpo_update(config, policy, adam, batch, critic, phi, replay_obs, m, rng);
  }
  UpdateStats stats;
  policy.params().zero_grad();
  if (config.omega > 0.0) {
    stats.on_objective = on_policy_surrogate(config.learner, policy, batch,
                                             config.ppo_clip, config.omega);
  }
  if (config.omega < 1.0 && replay_obs != nullptr) {
    const OffPolicyStats off = off_policy_surrogate(
        policy, critic, phi, *replay_obs, config.alpha, m, rng, 1.0 - config.omega);
    stats.off_objective = off.objective;
    stats.mean_positive_adv = off.mean_positive_adv;
    stats.mean_abs_residual = off.mean_abs_residual;
  }
  stats.grad_norm =
      clip_grad_norm(policy.params(), config.max_grad_norm, &stats.grad_clipped);
  adam_step(policy.params(), adam);
  return stats;
}

CgResult conjugate_gradient(
    const std::function<std::vector<double>(const std::vector<double>&)>& apply,
    const std::vector<double>& b, int max_iters, double tol) {
  CgResult out;
  out.x.assign(b.size(), 0.0);
  std::vector<double> r = b;
  std::vector<double> p = b;
  double rr = dot(r, r);
  for (int it = 0; it < max_iters; ++it) {
    if (std::sqrt(rr) < tol) break;
    const std::vector<double> ap = apply(p);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;
    const double step = rr / pap;
    for (std::size_t i = 0; i < b.size(); ++i) {
      out.x[i] += step * p[i];
      r[i] -= step * ap[i];
    }
    const double rr_new = dot(r, r);
    for (std::size_t i = 0; i < b.size(); ++i) p[i] = r[i] + (rr_new / rr) * p[i];
    rr = rr_new;
    out.iterations = it + 1;
  }
  out.residual_norm = std::sqrt(rr);
  out.converged = out.residual_norm < tol;
  return out;
}

UpdateStats trpo_update(const PolicyConfig& config, BetaPolicy& policy,
                        AdamState& adam, const OnPolicyMinibatch& batch,
                        const Network& critic, const Network& phi,
                        const Batch* replay_obs, int m, Rng& rng) {
  config.validate();
  check_on_batch(batch);
  UpdateStats stats;
  ParamVector& params = policy.params();
  const ParamStorage theta_old = params.values;
  const BetaShapes old_shapes = policy.shapes(batch.obs);

  // Off-policy loss gradient at the old parameters.
  ParamStorage g_off;
  const bool use_off = config.omega < 1.0 && replay_obs != nullptr;
  if (use_off) {
    params.zero_grad();
    const OffPolicyStats off =
        off_policy_surrogate(policy, critic, phi, *replay_obs, config.alpha, m, rng);
    stats.off_objective = off.objective;
    stats.mean_positive_adv = off.mean_positive_adv;
    stats.mean_abs_residual = off.mean_abs_residual;
    g_off = params.grads;
  }

  params.zero_grad();
  const double j_old =
      on_policy_surrogate(Learner::kTrpo, policy, batch, config.ppo_clip);
  stats.on_objective = j_old;
  std::vector<double> g(params.grads.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = -params.grads[i];
  params.zero_grad();

  const auto fvp = [&](const std::vector<double>& v) {
    std::vector<double> out = policy.fisher_vector_product(batch.obs, v);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += config.damping * v[i];
    return out;
  };
  const double g_norm = std::sqrt(dot(g, g));
  stats.grad_norm = g_norm;
  std::vector<double> delta(g.size(), 0.0);
  if (g_norm > 0.0) {
    CgResult cg = conjugate_gradient(fvp, g, config.cg_iters);
    std::vector<double> dir = cg.x;
    double shs = all_finite(dir) ? dot(dir, fvp(dir)) : -1.0;
    if (!(shs > 0.0) || !std::isfinite(shs) ||
        (!cg.converged && !(cg.residual_norm < g_norm))) {
      stats.cg_fallback = true;
      dir = g;
      shs = dot(dir, fvp(dir));
    }
    if (shs > 0.0 && std::isfinite(shs)) {
      const double step_scale = std::sqrt(2.0 * config.max_kl / shs);
      double frac = 1.0;
      for (int k = 0; k < config.line_search_steps; ++k) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          params.values[i] = theta_old[i] + frac * step_scale * dir[i];
        }
        const double kl = policy.kl_from(old_shapes, batch.obs).mean();
        const double j_new = ratio_objective(policy, batch);
        if (std::isfinite(j_new) && kl <= config.max_kl && j_new > j_old) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            delta[i] = frac * step_scale * dir[i];
          }
          stats.kl = kl;
          break;
        }
        frac *= 0.5;
      }
    }
  }

  for (std::size_t i = 0; i < g.size(); ++i) {
    params.values[i] = theta_old[i] + config.omega * delta[i];
  }
  if (use_off) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      params.grads[i] = (1.0 - config.omega) * g_off[i];
    }
    clip_grad_norm(params, config.max_grad_norm, &stats.grad_clipped);
    adam_step(params, adam);
  }
  return stats;
}

std::vector<double> normalize_advantages(const std::vector<double>& adv) {
  if (adv.size() < 2) {
    throw std::invalid_argument("advantage normalization needs >= 2 samples");
  }
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<double>(adv.size());
  const double denom = std::sqrt(var) + 1e-8;
  std::vector<double> out(adv.size());
  for (std::size_t i = 0; i < adv.size(); ++i) out[i] = (adv[i] - mean) / denom;
  return out;
}

RunningNormalizer::RunningNormalizer(int dim)
    : mean_(static_cast<std::size_t>(dim), 0.0),
      m2_(static_cast<std::size_t>(dim), 0.0) {
  if (dim < 1) throw std::invalid_argument("normalizer needs dim >= 1");
}

std::vector<double> RunningNormalizer::variance() const {
  std::vector<double> v(mean_.size(), 1.0);
  if (count_ < 1.0) return v;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = m2_[i] / count_;
  return v;
}

void RunningNormalizer::update(std::span<const double> x) {
  if (x.size() != mean_.size()) throw std::invalid_argument("normalizer dim mismatch");
  count_ += 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean_[i];
    mean_[i] += d / count_;
    m2_[i] += d * (x[i] - mean_[i]);
  }
}

void RunningNormalizer::update_batch(const Batch& xs) {
  if (xs.rows() != dim()) throw std::invalid_argument("normalizer dim mismatch");
  const double nb = static_cast<double>(xs.cols());
  if (nb == 0.0) return;
  const double total = count_ + nb;
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const double mb = xs.row(i).mean();
    const double m2b = (xs.row(i).array() - mb).square().sum();
    const double d = mb - mean_[i];
    mean_[i] += d * nb / total;
    m2_[i] += m2b + d * d * count_ * nb / total;
  }
  count_ = total;
}

std::vector<double> RunningNormalizer::normalize(std::span<const double> x) const {
  if (x.size() != mean_.size()) throw std::invalid_argument("normalizer dim mismatch");
  const std::vector<double> var = variance();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mean_[i]) / std::sqrt(var[i] + 1e-8);
  }
  return out;
}

Batch RunningNormalizer::normalize(const Batch& xs) const {
  if (xs.rows() != dim()) throw std::invalid_argument("normalizer dim mismatch");
  const std::vector<double> var = variance();
  Batch out(xs.rows(), xs.cols());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    out.row(i) = (xs.row(i).array() - mean_[i]) / std::sqrt(var[i] + 1e-8);
  }
  return out;
}

std::string RunningNormalizer::serialize() const {
  std::ostringstream out;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", count_);
  out << buf << ' ' << mean_.size();
  for (double v : mean_) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ' ' << buf;
  }
  for (double v : m2_) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ' ' << buf;
  }
  return out.str();
}

RunningNormalizer RunningNormalizer::deserialize(const std::string& text) {
  std::istringstream in(text);
  double count = 0.0;
  int dim = 0;
  if (!(in >> count >> dim) || dim < 1) {
    throw std::runtime_error("malformed normalizer record");
  }
  RunningNormalizer n(dim);
  n.count_ = count;
  for (double& v : n.mean_) {
    if (!(in >> v)) throw std::runtime_error("malformed normalizer record");
  }
  for (double& v : n.m2_) {
    if (!(in >> v)) throw std::runtime_error("malformed normalizer record");
  }
  return n;
}

void RewardScaler::observe(double reward, bool episode_end) {
  ret_ = gamma_ * ret_ + reward;
  const double r[1] = {ret_};
  stats_.update(r);
  if (episode_end) ret_ = 0.0;
}

double RewardScaler::stddev() const {
  if (stats_.count() < 2.0) return 1.0;
  return std::sqrt(stats_.variance()[0] + 1e-8);
}

double RewardScaler::scale(double reward) const { return reward / stddev(); }

}  // namespace dpo
