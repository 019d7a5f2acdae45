#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpo/beta_policy.hpp"
#include "dpo/funcapprox.hpp"
#include "dpo/rng.hpp"

namespace dpo {

enum class Learner { kPpo, kA2c, kTrpo };

Learner parse_learner(const std::string& name);
std::string learner_name(Learner learner);

struct PolicyConfig {
  double omega = 0.7;
  double alpha = 0.03;
  Learner learner = Learner::kPpo;
  double ppo_clip = 0.2;
  double max_kl = 0.1;
  double damping = 0.1;
  int epochs_per_batch = 10;
  int cg_iters = 10;
  int line_search_steps = 10;
  double max_grad_norm = 100.0;

  /// Defaults with the epoch count of the given learner (ppo 10, a2c 1, trpo 1).
  static PolicyConfig for_learner(Learner learner);
  void validate() const;
};

/// max(q - b, 0).
double positive_advantage(double q, double b);

/// On-policy data in the untransformed action space.
struct OnPolicyMinibatch {
  Batch obs;
  Batch unit;
  Eigen::VectorXd old_log_prob;  // log pi_old(a|s), bound correction included
  Eigen::VectorXd advantages;    // interpolated and normalized

  Eigen::Index size() const { return obs.cols(); }
};

/// Surrogate objective of the learner (ppo: clipped ratio, a2c: log pi * A,
/// trpo: ratio * A). Adds -scale * dJ/dtheta to the policy gradients and
/// returns J.
double on_policy_surrogate(Learner learner, BetaPolicy& policy,
                           const OnPolicyMinibatch& batch, double ppo_clip,
                           double scale = 1.0);

struct OffPolicyStats {
  double objective = 0.0;          // mean of A+ - alpha log pi
  double mean_positive_adv = 0.0;  // mean A+
  double mean_abs_residual = 0.0;  // mean |r_phi| over the baseline samples
};

/// Score-function estimator of grad E_{a~pi}[A+(s, a) - alpha log pi(a|s)] over
/// replay states with fresh actions; A+ = max(mean Z_w - b_phi^pi, 0).
/// Adds -scale * gradient to the policy gradients.
OffPolicyStats off_policy_surrogate(BetaPolicy& policy, const Network& critic,
                                    const Network& phi, const Batch& obs,
                                    double alpha, int m, Rng& rng,
                                    double scale = 1.0);

/// Same estimator with caller-supplied actions and baseline values.
OffPolicyStats off_policy_surrogate_given(BetaPolicy& policy,
                                          const Network& critic, const Batch& obs,
                                          const Batch& unit,
                                          const Eigen::VectorXd& baselines,
                                          double alpha, double scale = 1.0);

struct UpdateStats {
  double on_objective = 0.0;
  double off_objective = 0.0;
  double mean_positive_adv = 0.0;
  double mean_abs_residual = 0.0;
  double grad_norm = 0.0;
  bool grad_clipped = false;
  bool cg_fallback = false;
  double kl = 0.0;
};

double grad_norm(const ParamVector& params);
/// Rescale gradients to `max_norm` when larger. Returns the pre-clip norm.
double clip_grad_norm(ParamVector& params, double max_norm, bool* clipped = nullptr);

/// omega * on-policy gradient + (1 - omega) * off-policy gradient, clipped,
/// then one optimizer step. A null `replay_obs` drops the off-policy term
/// (the on-policy term keeps its omega weight).
UpdateStats combined_update(const PolicyConfig& config, BetaPolicy& policy,
                            AdamState& adam, const OnPolicyMinibatch& batch,
                            const Network& critic, const Network& phi,
                            const Batch* replay_obs, int m, Rng& rng);

struct CgResult {
  std::vector<double> x;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Solves A x = b for symmetric positive definite A given as a product.
CgResult conjugate_gradient(
    const std::function<std::vector<double>(const std::vector<double>&)>& apply,
    const std::vector<double>& b, int max_iters, double tol = 1e-10);

/// Natural-gradient step with KL line search, composed with an off-policy
/// step: theta += omega * delta, then one optimizer step on (1 - omega) times
/// the off-policy gradient taken at the old parameters.
UpdateStats trpo_update(const PolicyConfig& config, BetaPolicy& policy,
                        AdamState& adam, const OnPolicyMinibatch& batch,
                        const Network& critic, const Network& phi,
                        const Batch* replay_obs, int m, Rng& rng);

/// (A - mean) / (std + 1e-8), population std.
std::vector<double> normalize_advantages(const std::vector<double>& adv);

/// Streaming per-dimension mean and variance (parallel merge).
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim);

  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }
  std::vector<double> variance() const;

  void update(std::span<const double> x);
  /// Merge the moments of a whole batch (columns are samples).
  void update_batch(const Batch& xs);
  std::vector<double> normalize(std::span<const double> x) const;
  Batch normalize(const Batch& xs) const;

  /// count, mean..., m2... as text tokens.
  std::string serialize() const;
  static RunningNormalizer deserialize(const std::string& text);

 private:
  double count_ = 0.0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

/// Divides rewards by the running std of the discounted return.
class RewardScaler {
 public:
  explicit RewardScaler(double gamma = 0.99) : gamma_(gamma), stats_(1) {}

  void observe(double reward, bool episode_end);
  double scale(double reward) const;
  double stddev() const;
  const RunningNormalizer& stats() const { return stats_; }
  RunningNormalizer& stats() { return stats_; }

 private:
  double gamma_;
  double ret_ = 0.0;
  RunningNormalizer stats_;
};

}  // namespace dpo
