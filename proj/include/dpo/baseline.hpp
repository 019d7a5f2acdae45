#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dpo/beta_policy.hpp"
#include "dpo/funcapprox.hpp"
#include "dpo/rng.hpp"

namespace dpo {

struct BaselineConfig {
  int m_actions = 30;
  int updates_per_iteration = 12;
  int minibatch = 256;

  void validate() const;
};

/// Residual network r_phi: (obs, action) -> scalar, linear output.
MlpSpec residual_spec(int obs_dim, int action_dim, std::vector<int> hidden);

double residual(const Network& phi, std::span<const double> obs,
                std::span<const double> action);
Eigen::VectorXd residual_batch(const Network& phi, const Batch& obs,
                               const Batch& actions);

/// Evaluation of b(s) = (1/m) sum_i (1 + r_phi(s, a_i)) mean Z_w(s, a_i) with
/// a_i ~ pi(.|s), keeping the per-sample pieces for gradients.
struct BaselineEstimate {
  Eigen::VectorXd values;    // one per state
  Batch repeated_obs;        // each state repeated m times (state-major)
  Batch sampled_actions;     // m actions per state
  Eigen::VectorXd critic_means;
  Eigen::VectorXd residuals;
  int m = 0;
};

BaselineEstimate estimate_baseline(const Network& phi, const Network& critic,
                                   const BetaPolicy& policy, const Batch& obs,
                                   int m, Rng& rng);

Eigen::VectorXd baseline_values(const Network& phi, const Network& critic,
                                const BetaPolicy& policy, const Batch& obs, int m,
                                Rng& rng);

double baseline_value(const Network& phi, const Network& critic,
                      const BetaPolicy& policy, std::span<const double> obs,
                      int m, Rng& rng);

/// Mean over (s, a) of (mean Z_w(s, a) - b(s))^2; gradient only reaches phi
/// and is accumulated into phi.params.grads. Returns the loss.
double baseline_loss_and_grad(Network& phi, const Network& critic,
                              const BetaPolicy& policy, const Batch& obs,
                              const Batch& actions, int m, Rng& rng);

double baseline_update(Network& phi, AdamState& adam, const Network& critic,
                       const BetaPolicy& policy, const Batch& obs,
                       const Batch& actions, int m, Rng& rng);

}  // namespace dpo
