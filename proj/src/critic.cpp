#include "dpo/critic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace dpo {

Batch stack_inputs(const Batch& obs, const Batch& actions) {
  if (obs.cols() != actions.cols()) {
    throw std::invalid_argument("observation and action counts differ");
  }
  Batch x(obs.rows() + actions.rows(), obs.cols());
  x.topRows(obs.rows()) = obs;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

MlpSpec critic_spec(int obs_dim, int action_dim, std::vector<int> hidden) {
  return MlpSpec::make(obs_dim + action_dim, std::move(hidden), 2);
}

GaussianBatch critic_forward_batch(const Network& w, const Batch& obs,
                                   const Batch& actions) {
  if (w.spec.output_dim != 2) {
    throw std::invalid_argument("critic network needs two outputs");
  }
  return gaussian_from_output(w.forward(stack_inputs(obs, actions)));
}

GaussianBatch gaussian_from_output(const Batch& out) {
  GaussianBatch z;
  z.mean = out.row(0).transpose();
  z.raw_stddev = out.row(1).transpose();
  z.stddev = z.raw_stddev.unaryExpr(
      [](double v) { return softplus(v) + kSigmaFloor; });
  return z;
}

GaussianValue critic_forward(const Network& w, std::span<const double> obs,
                             std::span<const double> action) {
  const Batch o = Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size());
  const Batch a = Eigen::Map<const Eigen::VectorXd>(action.data(), action.size());
  const GaussianBatch z = critic_forward_batch(w, o, a);
  return {z.mean[0], z.stddev[0]};
}

CriticPair::CriticPair(Network net, double tau_, double learning_rate)
    : online(net), target(std::move(net)), tau(tau_),
      adam(online.params.size(), learning_rate) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("tau must lie in (0, 1]");
  }
}

double kl_td_loss_and_grad(Network& w, const Network& target,
                           const TransitionBatch& batch, const BetaPolicy& policy,
                           double gamma, Rng& rng) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw std::invalid_argument("empty minibatch");
  const PolicyDraw next = policy.sample(batch.next_obs, rng);
  const GaussianBatch succ = critic_forward_batch(target, batch.next_obs, next.action);
  const ForwardTape tape =
      forward_tape(w.spec, w.params, stack_inputs(batch.obs, batch.actions));
  const GaussianBatch model = gaussian_from_output(tape.output);

  Batch out_grad(2, n);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    GaussianValue tgt;
    if (batch.terminals[j] != 0) {
      tgt = {batch.rewards[j], kSigmaFloor};
    } else {
      tgt = {batch.rewards[j] + gamma * succ.mean[j],
             std::max(gamma * succ.stddev[j], kSigmaFloor)};
    }
    const GaussianValue cur{model.mean[j], model.stddev[j]};
    loss += gaussian_kl(tgt, cur);
    const GaussianGrad g = gaussian_kl_grad(tgt, cur);
    out_grad(0, j) = inv_n * g.d_mean;
    out_grad(1, j) = inv_n * g.d_stddev * sigmoid(model.raw_stddev[j]);
  }
  backward_tape(w.spec, w.params, tape, out_grad);
  return loss * inv_n;
}

double kl_td_update(CriticPair& pair, const TransitionBatch& batch,
                    const BetaPolicy& policy, double gamma, Rng& rng) {
  pair.online.params.zero_grad();
  const double loss =
      kl_td_loss_and_grad(pair.online, pair.target, batch, policy, gamma, rng);
  adam_step(pair.online.params, pair.adam);
  return loss;
}

void polyak_update(CriticPair& pair) {
  auto& tgt = pair.target.params.values;
  const auto& src = pair.online.params.values;
  if (tgt.size() != src.size()) {
    throw std::invalid_argument("online and target critic differ in size");
  }
  for (std::size_t i = 0; i < tgt.size(); ++i) {
    tgt[i] = pair.tau * src[i] + (1.0 - pair.tau) * tgt[i];
  }
}

std::vector<double> sample_value_vector(const Network& w,
                                        std::span<const double> obs,
                                        std::span<const double> action, int l,
                                        Rng& rng) {
  if (l < 1) throw std::invalid_argument("need at least one sample");
  const GaussianValue z = critic_forward(w, obs, action);
  std::vector<double> out(static_cast<std::size_t>(l));
  for (double& v : out) v = z.mean + z.stddev * standard_normal(rng);
  return out;
}

Eigen::MatrixXd sample_value_matrix(const GaussianBatch& z, int l, Rng& rng) {
  if (l < 1) throw std::invalid_argument("need at least one sample");
  Eigen::MatrixXd out(l, z.mean.size());
  // One distribution object so the polar method's second draw is used.
  std::normal_distribution<double> normal;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < l; ++i) {
      out(i, j) = z.mean[j] + z.stddev[j] * normal(rng);
    }
  }
  return out;
}

double cross_entropy_loss_and_grad(Network& w, const Batch& obs,
                                   const Batch& actions,
                                   const Eigen::MatrixXd& targets) {
  const Eigen::Index n = obs.cols();
  if (n == 0) throw std::invalid_argument("empty batch");
  if (targets.cols() != n || targets.rows() < 1) {
    throw std::invalid_argument("target matrix must have one column per sample");
  }
  if (w.spec.output_dim != 2) {
    throw std::invalid_argument("critic network needs two outputs");
  }
  const ForwardTape tape = forward_tape(w.spec, w.params, stack_inputs(obs, actions));
  const GaussianBatch z = gaussian_from_output(tape.output);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_l = 1.0 / static_cast<double>(targets.rows());
  Batch out_grad(2, n);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const GaussianValue g{z.mean[j], z.stddev[j]};
    double d_mean = 0.0;
    double d_std = 0.0;
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
      loss -= inv_l * gaussian_log_density(targets(i, j), g);
      const GaussianGrad lg = gaussian_log_density_grad(targets(i, j), g);
      d_mean -= inv_l * lg.d_mean;
      d_std -= inv_l * lg.d_stddev;
    }
    out_grad(0, j) = inv_n * d_mean;
    out_grad(1, j) = inv_n * d_std * sigmoid(z.raw_stddev[j]);
  }
  backward_tape(w.spec, w.params, tape, out_grad);
  return loss * inv_n;
}

double cross_entropy_update(CriticPair& pair, const Batch& obs,
                            const Batch& actions, const Eigen::MatrixXd& targets) {
  pair.online.params.zero_grad();
  const double loss = cross_entropy_loss_and_grad(pair.online, obs, actions, targets);
  adam_step(pair.online.params, pair.adam);
  return loss;
}

}  // namespace dpo
