#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dpo/distributions.hpp"
#include "dpo/funcapprox.hpp"
#include "dpo/rng.hpp"

namespace dpo {

/// Beta shapes for a batch: one column per observation, one row per action
/// dimension. `raw` keeps the network head (alpha rows then beta rows).
struct BetaShapes {
  Eigen::MatrixXd alpha;
  Eigen::MatrixXd beta;
  Eigen::MatrixXd raw;

  Eigen::Index size() const { return alpha.cols(); }
  BetaParams at(Eigen::Index col) const;
};

struct PolicyDraw {
  Batch unit;    // x in (kUnitClip, 1 - kUnitClip)
  Batch action;  // x * k + m
};

/// Beta policy pi(a|s) over a box, parameterized by an MLP with a
/// softplus+1 head on both shape vectors.
class BetaPolicy {
 public:
  BetaPolicy() = default;
  BetaPolicy(int obs_dim, ActionBounds bounds, std::vector<int> hidden, Rng& rng);
  BetaPolicy(Network net, ActionBounds bounds);

  int obs_dim() const { return net_.spec.input_dim; }
  int action_dim() const { return static_cast<int>(bounds_.dim()); }
  const ActionBounds& bounds() const { return bounds_; }
  Network& network() { return net_; }
  const Network& network() const { return net_; }
  ParamVector& params() { return net_.params; }
  const ParamVector& params() const { return net_.params; }

  BetaShapes shapes(const Batch& obs) const;
  PolicyDraw sample(const Batch& obs, Rng& rng) const;
  PolicyDraw sample(const BetaShapes& shapes, Rng& rng) const;

  /// log pi(a|s) = log f(x|s) - sum log k, for unit actions x.
  Eigen::VectorXd log_prob(const Batch& obs, const Batch& unit) const;
  static Eigen::VectorXd log_density(const BetaShapes& shapes, const Batch& unit);

  /// params.grads += sum_i weights_i * d log pi(x_i|s_i) / d theta.
  void accumulate_log_prob_grad(const Batch& obs, const Batch& unit,
                                const Eigen::VectorXd& weights);

  /// Mean action alpha/(alpha+beta) mapped into the bounds.
  Batch mean_action(const Batch& obs) const;
  Eigen::VectorXd entropy(const Batch& obs) const;
  /// Per-sample KL(old || current).
  Eigen::VectorXd kl_from(const BetaShapes& old, const Batch& obs) const;

  /// Mean over the batch of J^T M J v, where M is the Fisher information of
  /// the Beta shapes and J the Jacobian of the shapes in the parameters.
  std::vector<double> fisher_vector_product(const Batch& obs,
                                            std::span<const double> v) const;

  /// -sum_i log k_i.
  double log_correction() const { return log_correction_; }
  Batch to_action(const Batch& unit) const;
  Batch to_unit(const Batch& action) const;

 private:
  Network net_;
  ActionBounds bounds_;
  double log_correction_ = 0.0;
};

}  // namespace dpo
