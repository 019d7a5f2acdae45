#pragma once

#include <span>
#include <vector>

#include "dpo/rng.hpp"

namespace dpo {

/// Lower bound on every critic standard deviation (return units).
inline constexpr double kSigmaFloor = 1e-3;
/// Clip margin for untransformed actions inside the unit interval.
inline constexpr double kUnitClip = 1e-6;

// Special functions. log_gamma uses a Lanczos approximation (g = 7).
double log_gamma(double x);
double digamma(double x);
double trigamma(double x);
double log_beta_function(double a, double b);

/// Gaussian return distribution Z(s, a).
struct GaussianValue {
  double mean = 0.0;
  double stddev = 1.0;
};

/// KL(target || model) between univariate normals.
double gaussian_kl(const GaussianValue& target, const GaussianValue& model);

struct GaussianGrad {
  double d_mean = 0.0;
  double d_stddev = 0.0;
};

/// Gradient of gaussian_kl with respect to the model's (mean, stddev).
GaussianGrad gaussian_kl_grad(const GaussianValue& target,
                              const GaussianValue& model);

double gaussian_log_density(double x, const GaussianValue& dist);

/// Gradient of gaussian_log_density with respect to (mean, stddev).
GaussianGrad gaussian_log_density_grad(double x, const GaussianValue& dist);

/// Per-dimension Beta shape parameters, all >= 1 when produced by the
/// softplus+1 head.
struct BetaParams {
  std::vector<double> alpha;
  std::vector<double> beta;

  std::size_t dim() const { return alpha.size(); }
  std::vector<double> mean() const;
  void validate() const;
};

/// shapes = softplus(v) + 1; `head` holds alpha logits then beta logits.
BetaParams beta_from_head(std::span<const double> head);

double beta_log_density(std::span<const double> x, const BetaParams& params);

/// d log f / d alpha and d log f / d beta, per dimension.
struct BetaShapeGrad {
  std::vector<double> d_alpha;
  std::vector<double> d_beta;
};
BetaShapeGrad beta_log_density_grad(std::span<const double> x,
                                    const BetaParams& params);

double beta_entropy(const BetaParams& params);

/// KL(p || q) summed over independent dimensions.
double beta_kl(const BetaParams& p, const BetaParams& q);

std::vector<double> sample_beta(const BetaParams& params, Rng& rng);

/// Box [lower, upper] per action dimension.
struct ActionBounds {
  std::vector<double> lower;
  std::vector<double> upper;

  ActionBounds() = default;
  ActionBounds(std::vector<double> lo, std::vector<double> hi);

  std::size_t dim() const { return lower.size(); }
  double scale(std::size_t i) const { return upper[i] - lower[i]; }
  bool contains(std::span<const double> a, double tol = 0.0) const;
  void validate() const;
};

struct TransformedAction {
  std::vector<double> action;
  double log_correction = 0.0;  // -sum(log k_i)
};

TransformedAction transform_action(std::span<const double> x,
                                   const ActionBounds& bounds);

/// Inverse of transform_action, clipped into (kUnitClip, 1 - kUnitClip).
std::vector<double> untransform_action(std::span<const double> a,
                                       const ActionBounds& bounds,
                                       double tol = 1e-9);

}  // namespace dpo
