#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dpo/beta_policy.hpp"
#include "dpo/distributions.hpp"
#include "dpo/funcapprox.hpp"
#include "dpo/rng.hpp"

namespace dpo {

/// Column-aligned transitions ready for learning (already normalized).
struct TransitionBatch {
  Batch obs;
  Batch actions;
  Eigen::VectorXd rewards;
  Batch next_obs;
  Eigen::VectorXi terminals;  // 1 only for true terminals

  Eigen::Index size() const { return obs.cols(); }
};

/// Stack observations over actions, column by column.
Batch stack_inputs(const Batch& obs, const Batch& actions);

/// Gaussian return model Z_w: network (obs, action) -> (mean, raw stddev).
struct GaussianBatch {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  Eigen::VectorXd raw_stddev;  // head before softplus
};

MlpSpec critic_spec(int obs_dim, int action_dim, std::vector<int> hidden);

GaussianValue critic_forward(const Network& w, std::span<const double> obs,
                             std::span<const double> action);
/// Splits a 2 x N network output into mean and floored stddev.
GaussianBatch gaussian_from_output(const Batch& out);
GaussianBatch critic_forward_batch(const Network& w, const Batch& obs,
                                   const Batch& actions);

/// Online critic w, target w-bar, smoothing tau and the optimizer of w.
struct CriticPair {
  Network online;
  Network target;
  double tau = 5e-3;
  AdamState adam;

  CriticPair() = default;
  CriticPair(Network net, double tau, double learning_rate);
};

/// KL(target || model) regression onto r + gamma Z_wbar(s', a'), a' ~ pi.
/// Accumulates the mean-loss gradient into w.params.grads; returns the loss.
double kl_td_loss_and_grad(Network& w, const Network& target,
                           const TransitionBatch& batch, const BetaPolicy& policy,
                           double gamma, Rng& rng);

/// kl_td_loss_and_grad followed by one optimizer step on the online critic.
double kl_td_update(CriticPair& pair, const TransitionBatch& batch,
                    const BetaPolicy& policy, double gamma, Rng& rng);

void polyak_update(CriticPair& pair);

/// l draws from Z_w(s, a).
std::vector<double> sample_value_vector(const Network& w,
                                        std::span<const double> obs,
                                        std::span<const double> action, int l,
                                        Rng& rng);
/// l draws per column: rows are samples.
Eigen::MatrixXd sample_value_matrix(const GaussianBatch& z, int l, Rng& rng);

/// Mean over columns of -(1/l) sum_i log N(U_i; Z_w(s, a)). `targets` has
/// one column per (s, a) and l rows. Accumulates gradient, returns the loss.
double cross_entropy_loss_and_grad(Network& w, const Batch& obs,
                                   const Batch& actions,
                                   const Eigen::MatrixXd& targets);

double cross_entropy_update(CriticPair& pair, const Batch& obs,
                            const Batch& actions, const Eigen::MatrixXd& targets);

}  // namespace dpo
