#pragma once

#include <vector>

namespace dpo {

/// Inputs of the unified advantage recursion over one ordered segment.
///
/// rewards and baselines have T entries; critic_values and terminal_flags
/// have T+1 (index T is the bootstrap position). terminal_flags[t] = 1 means
/// the episode ended before step t, so nothing at t is reachable from t-1.
struct RolloutArrays {
  std::vector<double> rewards;
  std::vector<double> critic_values;
  std::vector<double> baselines;
  std::vector<int> terminal_flags;
  double gamma = 0.99;
  double lambda = 0.95;

  std::size_t length() const { return rewards.size(); }
  void validate() const;
};

/// Unified advantage estimator, computed by backward recursion.
std::vector<double> uae(const RolloutArrays& arrays);

/// Generalized advantage estimation with state values V[0..T].
std::vector<double> gae(const std::vector<double>& rewards,
                        const std::vector<double>& values,
                        const std::vector<int>& terminal_flags, double gamma,
                        double lambda);

/// Forward-view lambda-return over Q-bootstrapped n-step returns, truncated
/// at T with the Q_T bootstrap.
std::vector<double> lambda_return_q(const std::vector<double>& rewards,
                                    const std::vector<double>& critic_values,
                                    const std::vector<int>& terminal_flags,
                                    double gamma, double lambda);

/// sum_{k<n} gamma^k r_{t+k} + gamma^n Q_{t+n} - b_t, stopping at terminals.
double n_step_advantage(const RolloutArrays& arrays, int n, int t);

/// (1 - nu) a_uae + nu q_minus_b.
double interpolate_advantage(double a_uae, double q_minus_b, double nu);

}  // namespace dpo
