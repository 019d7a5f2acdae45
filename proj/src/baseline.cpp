#include "dpo/baseline.hpp"

#include <stdexcept>

#include "dpo/critic.hpp"

namespace dpo {

void BaselineConfig::validate() const {
  if (m_actions < 1 || updates_per_iteration < 1 || minibatch < 1) {
    throw std::invalid_argument("baseline settings must be positive");
  }
}

MlpSpec residual_spec(int obs_dim, int action_dim, std::vector<int> hidden) {
  return MlpSpec::make(obs_dim + action_dim, std::move(hidden), 1);
}

Eigen::VectorXd residual_batch(const Network& phi, const Batch& obs,
                               const Batch& actions) {
  if (phi.spec.output_dim != 1) {
    throw std::invalid_argument("residual network needs one output");
  }
  return phi.forward(stack_inputs(obs, actions)).row(0).transpose();
}

double residual(const Network& phi, std::span<const double> obs,
                std::span<const double> action) {
  const Batch o = Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size());
  const Batch a = Eigen::Map<const Eigen::VectorXd>(action.data(), action.size());
  return residual_batch(phi, o, a)[0];
}

BaselineEstimate estimate_baseline(const Network& phi, const Network& critic,
                                   const BetaPolicy& policy, const Batch& obs,
                                   int m, Rng& rng) {
  if (m < 1) throw std::invalid_argument("baseline needs m >= 1");
  const Eigen::Index n = obs.cols();
  BaselineEstimate est;
  est.m = m;
  est.repeated_obs.resize(obs.rows(), n * m);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int i = 0; i < m; ++i) est.repeated_obs.col(j * m + i) = obs.col(j);
  }
  // The policy head only depends on the state: evaluate it once per state.
  const BetaShapes per_state = policy.shapes(obs);
  BetaShapes shapes;
  shapes.alpha.resize(per_state.alpha.rows(), n * m);
  shapes.beta.resize(per_state.beta.rows(), n * m);
  for (Eigen::Index j = 0; j < n; ++j) {
    shapes.alpha.middleCols(j * m, m) = per_state.alpha.col(j).replicate(1, m);
    shapes.beta.middleCols(j * m, m) = per_state.beta.col(j).replicate(1, m);
  }
  est.sampled_actions = policy.sample(shapes, rng).action;
  est.critic_means =
      critic_forward_batch(critic, est.repeated_obs, est.sampled_actions).mean;
  est.residuals = residual_batch(phi, est.repeated_obs, est.sampled_actions);
  est.values.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
      const Eigen::Index k = j * m + i;
      acc += (1.0 + est.residuals[k]) * est.critic_means[k];
    }
    est.values[j] = acc / m;
  }
  return est;
}

Eigen::VectorXd baseline_values(const Network& phi, const Network& critic,
                                const BetaPolicy& policy, const Batch& obs, int m,
                                Rng& rng) {
  return estimate_baseline(phi, critic, policy, obs, m, rng).values;
}

double baseline_value(const Network& phi, const Network& critic,
                      const BetaPolicy& policy, std::span<const double> obs,
                      int m, Rng& rng) {
  const Batch o = Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size());
  return baseline_values(phi, critic, policy, o, m, rng)[0];
}

double baseline_loss_and_grad(Network& phi, const Network& critic,
                              const BetaPolicy& policy, const Batch& obs,
                              const Batch& actions, int m, Rng& rng) {
  const Eigen::Index n = obs.cols();
  if (n == 0) throw std::invalid_argument("empty minibatch");
  const Eigen::VectorXd q = critic_forward_batch(critic, obs, actions).mean;
  const BaselineEstimate est = estimate_baseline(phi, critic, policy, obs, m, rng);
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  Batch out_grad(1, n * m);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double diff = q[j] - est.values[j];
    loss += diff * diff;
    // d loss / d r_i = -2 (Q - b) Q_i / (m n)
    for (int i = 0; i < m; ++i) {
      const Eigen::Index k = j * m + i;
      out_grad(0, k) = -2.0 * diff * est.critic_means[k] * inv_n / m;
    }
  }
  phi.backward(stack_inputs(est.repeated_obs, est.sampled_actions), out_grad);
  return loss * inv_n;
}

double baseline_update(Network& phi, AdamState& adam, const Network& critic,
                       const BetaPolicy& policy, const Batch& obs,
                       const Batch& actions, int m, Rng& rng) {
  phi.params.zero_grad();
  const double loss = baseline_loss_and_grad(phi, critic, policy, obs, actions, m, rng);
  adam_step(phi.params, adam);
  return loss;
}

}  // namespace dpo
