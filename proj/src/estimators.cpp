#include "dpo/estimators.hpp"

#include <stdexcept>
#include <string>

namespace dpo {

namespace {

void check_lengths(std::size_t t, std::size_t values, std::size_t flags,
                   const char* what) {
  if (values != t + 1 || flags != t + 1) {
    throw std::invalid_argument(std::string(what) +
                                ": values and flags need T+1 entries");
  }
}

void check_coefficients(double gamma, double lambda) {
  // gamma = 1 is allowed: segments are finite.
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("gamma and lambda must lie in [0, 1]");
  }
}

}  // namespace

void RolloutArrays::validate() const {
  if (baselines.size() != rewards.size()) {
    throw std::invalid_argument("baselines need T entries");
  }
  check_lengths(rewards.size(), critic_values.size(), terminal_flags.size(),
                "RolloutArrays");
  check_coefficients(gamma, lambda);
}

std::vector<double> uae(const RolloutArrays& arrays) {
  arrays.validate();
  const std::size_t n = arrays.length();
  const auto& r = arrays.rewards;
  const auto& q = arrays.critic_values;
  const auto& b = arrays.baselines;
  const auto& d = arrays.terminal_flags;
  std::vector<double> adv(n);
  double carry = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = 1.0 - d[i + 1];
    const double delta = r[i] + arrays.gamma * q[i + 1] * live - b[i];
    const double z = q[i] - b[i];
    const double disc = arrays.gamma * arrays.lambda * live * carry;
    adv[i] = delta + disc;
    carry = (delta - z) + disc;
  }
  return adv;
}

std::vector<double> gae(const std::vector<double>& rewards,
                        const std::vector<double>& values,
                        const std::vector<int>& terminal_flags, double gamma,
                        double lambda) {
  check_lengths(rewards.size(), values.size(), terminal_flags.size(), "gae");
  check_coefficients(gamma, lambda);
  std::vector<double> adv(rewards.size());
  double last = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double live = 1.0 - terminal_flags[i + 1];
    const double delta = rewards[i] + gamma * values[i + 1] * live - values[i];
    last = delta + gamma * lambda * live * last;
    adv[i] = last;
  }
  return adv;
}

std::vector<double> lambda_return_q(const std::vector<double>& rewards,
                                    const std::vector<double>& critic_values,
                                    const std::vector<int>& terminal_flags,
                                    double gamma, double lambda) {
  check_lengths(rewards.size(), critic_values.size(), terminal_flags.size(),
                "lambda_return_q");
  check_coefficients(gamma, lambda);
  const std::size_t n = rewards.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    // G = (1-lambda) sum_{k=1}^{T-t-1} lambda^{k-1} G^(k) + lambda^{T-t-1} G^(T-t),
    // where a terminal freezes every longer return at its value.
    double partial = 0.0;  // discounted rewards r_t .. r_{t+k-1}
    double disc = 1.0;
    double weight = 1.0;  // lambda^{k-1}
    double total = 0.0;
    bool ended = false;
    for (std::size_t k = 1; t + k <= n; ++k) {
      partial += disc * rewards[t + k - 1];
      disc *= gamma;
      const bool last = (t + k == n);
      ended = terminal_flags[t + k] != 0;
      const double gk = ended ? partial : partial + disc * critic_values[t + k];
      if (last || ended) {
        total += weight * gk;
        break;
      }
      total += (1.0 - lambda) * weight * gk;
      weight *= lambda;
    }
    out[t] = total;
  }
  return out;
}

double n_step_advantage(const RolloutArrays& arrays, int n, int t) {
  arrays.validate();
  if (n < 1 || t < 0 || static_cast<std::size_t>(t + n) > arrays.length()) {
    throw std::out_of_range("n_step_advantage needs n >= 1 and t + n <= T");
  }
  double ret = 0.0;
  double disc = 1.0;
  for (int k = 0; k < n; ++k) {
    ret += disc * arrays.rewards[t + k];
    disc *= arrays.gamma;
    if (arrays.terminal_flags[t + k + 1] != 0) {
      return ret - arrays.baselines[t];
    }
  }
  return ret + disc * arrays.critic_values[t + n] - arrays.baselines[t];
}

double interpolate_advantage(double a_uae, double q_minus_b, double nu) {
  if (!(nu >= 0.0 && nu <= 1.0)) {
    throw std::invalid_argument("nu must lie in [0, 1]");
  }
  return (1.0 - nu) * a_uae + nu * q_minus_b;
}

}  // namespace dpo
