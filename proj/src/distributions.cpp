#include "dpo/distributions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "dpo/funcapprox.hpp"

namespace dpo {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string("non-finite ") + what);
  }
}

void require_gaussian(const GaussianValue& g) {
  require_finite(g.mean, "mean");
  require_finite(g.stddev, "stddev");
  if (g.stddev <= 0.0) throw std::invalid_argument("stddev must be positive");
}

}  // namespace

double log_gamma(double x) {
  static constexpr std::array<double, 9> kCoef = {
      0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
      771.32342877765313,   -176.61502916214059,   12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  if (!(x > 0.0)) throw std::invalid_argument("log_gamma needs x > 0");
  if (x < 0.5) {
    // Reflection keeps the series in its accurate range.
    return std::log(std::numbers::pi / std::abs(std::sin(std::numbers::pi * x))) -
           log_gamma(1.0 - x);
  }
  const double z = x - 1.0;
  double sum = kCoef[0];
  for (std::size_t i = 1; i < kCoef.size(); ++i) {
    sum += kCoef[i] / (z + static_cast<double>(i));
  }
  const double t = z + 7.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t +
         std::log(sum);
}

double digamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("digamma needs x > 0");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return acc + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12 -
                 inv2 * (1.0 / 120 -
                         inv2 * (1.0 / 252 -
                                 inv2 * (1.0 / 240 - inv2 * (1.0 / 132)))));
}

double trigamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("trigamma needs x > 0");
  double acc = 0.0;
  while (x < 6.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return acc + inv + 0.5 * inv2 +
         inv * inv2 *
             (1.0 / 6 -
              inv2 * (1.0 / 30 - inv2 * (1.0 / 42 - inv2 * (1.0 / 30))));
}

double log_beta_function(double a, double b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

double gaussian_kl(const GaussianValue& target, const GaussianValue& model) {
  require_gaussian(target);
  require_gaussian(model);
  const double diff = target.mean - model.mean;
  const double s1 = target.stddev;
  const double s2 = model.stddev;
  // (s1^2 - s2^2) / (2 s2^2) replaces s1^2 / (2 s2^2) - 1/2 to avoid cancellation.
  return std::log(s2 / s1) + ((s1 - s2) * (s1 + s2) + diff * diff) / (2.0 * s2 * s2);
}

GaussianGrad gaussian_kl_grad(const GaussianValue& target,
                              const GaussianValue& model) {
  require_gaussian(target);
  require_gaussian(model);
  const double diff = target.mean - model.mean;
  const double s2 = model.stddev * model.stddev;
  GaussianGrad g;
  g.d_mean = -diff / s2;
  g.d_stddev = 1.0 / model.stddev -
               (target.stddev * target.stddev + diff * diff) / (s2 * model.stddev);
  return g;
}

double gaussian_log_density(double x, const GaussianValue& dist) {
  require_finite(x, "sample");
  require_gaussian(dist);
  const double z = (x - dist.mean) / dist.stddev;
  return -std::log(dist.stddev * std::sqrt(2.0 * std::numbers::pi)) - 0.5 * z * z;
}

GaussianGrad gaussian_log_density_grad(double x, const GaussianValue& dist) {
  require_gaussian(dist);
  const double diff = x - dist.mean;
  const double s2 = dist.stddev * dist.stddev;
  return {diff / s2, -1.0 / dist.stddev + diff * diff / (s2 * dist.stddev)};
}

std::vector<double> BetaParams::mean() const {
  std::vector<double> m(dim());
  for (std::size_t i = 0; i < dim(); ++i) m[i] = alpha[i] / (alpha[i] + beta[i]);
  return m;
}

void BetaParams::validate() const {
  if (alpha.size() != beta.size() || alpha.empty()) {
    throw std::invalid_argument("Beta shape vectors must match and be non-empty");
  }
  for (std::size_t i = 0; i < dim(); ++i) {
    if (!(alpha[i] > 0.0) || !(beta[i] > 0.0) || !std::isfinite(alpha[i]) ||
        !std::isfinite(beta[i])) {
      throw std::invalid_argument("Beta shapes must be positive and finite");
    }
  }
}

BetaParams beta_from_head(std::span<const double> head) {
  if (head.empty() || head.size() % 2 != 0) {
    throw std::invalid_argument("Beta head must have even length");
  }
  const std::size_t n = head.size() / 2;
  BetaParams p;
  p.alpha.resize(n);
  p.beta.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.alpha[i] = softplus(head[i]) + 1.0;
    p.beta[i] = softplus(head[n + i]) + 1.0;
  }
  return p;
}

double beta_log_density(std::span<const double> x, const BetaParams& params) {
  params.validate();
  if (x.size() != params.dim()) {
    throw std::invalid_argument("Beta sample dimension mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0 && x[i] <= 1.0)) {
      throw std::invalid_argument("Beta sample outside [0, 1]");
    }
    const double a = params.alpha[i];
    const double b = params.beta[i];
    // (a-1) log x is taken as 0 when a == 1, including at x == 0.
    const double lx = a == 1.0 ? 0.0 : (a - 1.0) * std::log(x[i]);
    const double l1x = b == 1.0 ? 0.0 : (b - 1.0) * std::log1p(-x[i]);
    total += lx + l1x - log_beta_function(a, b);
  }
  return total;
}

BetaShapeGrad beta_log_density_grad(std::span<const double> x,
                                    const BetaParams& params) {
  params.validate();
  if (x.size() != params.dim()) {
    throw std::invalid_argument("Beta sample dimension mismatch");
  }
  BetaShapeGrad g;
  g.d_alpha.resize(x.size());
  g.d_beta.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = params.alpha[i];
    const double b = params.beta[i];
    const double common = digamma(a + b);
    g.d_alpha[i] = std::log(x[i]) - digamma(a) + common;
    g.d_beta[i] = std::log1p(-x[i]) - digamma(b) + common;
  }
  return g;
}

double beta_entropy(const BetaParams& params) {
  params.validate();
  double h = 0.0;
  for (std::size_t i = 0; i < params.dim(); ++i) {
    const double a = params.alpha[i];
    const double b = params.beta[i];
    h += log_beta_function(a, b) - (a - 1.0) * digamma(a) -
         (b - 1.0) * digamma(b) + (a + b - 2.0) * digamma(a + b);
  }
  return h;
}

double beta_kl(const BetaParams& p, const BetaParams& q) {
  p.validate();
  q.validate();
  if (p.dim() != q.dim()) throw std::invalid_argument("Beta dimension mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    const double a1 = p.alpha[i], b1 = p.beta[i];
    const double a2 = q.alpha[i], b2 = q.beta[i];
    kl += log_beta_function(a2, b2) - log_beta_function(a1, b1) +
          (a1 - a2) * digamma(a1) + (b1 - b2) * digamma(b1) +
          (a2 - a1 + b2 - b1) * digamma(a1 + b1);
  }
  return kl;
}

std::vector<double> sample_beta(const BetaParams& params, Rng& rng) {
  params.validate();
  std::vector<double> x(params.dim());
  for (std::size_t i = 0; i < params.dim(); ++i) {
    const double g1 = std::gamma_distribution<double>(params.alpha[i], 1.0)(rng);
    const double g2 = std::gamma_distribution<double>(params.beta[i], 1.0)(rng);
    x[i] = g1 / (g1 + g2);
  }
  return x;
}

ActionBounds::ActionBounds(std::vector<double> lo, std::vector<double> hi)
    : lower(std::move(lo)), upper(std::move(hi)) {
  validate();
}

void ActionBounds::validate() const {
  if (lower.size() != upper.size() || lower.empty()) {
    throw std::invalid_argument("action bounds must have matching length");
  }
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!(upper[i] > lower[i]) || !std::isfinite(lower[i]) ||
        !std::isfinite(upper[i])) {
      throw std::invalid_argument("action bounds need upper > lower");
    }
  }
}

bool ActionBounds::contains(std::span<const double> a, double tol) const {
  if (a.size() != dim()) return false;
  for (std::size_t i = 0; i < dim(); ++i) {
    if (!(a[i] >= lower[i] - tol && a[i] <= upper[i] + tol)) return false;
  }
  return true;
}

TransformedAction transform_action(std::span<const double> x,
                                   const ActionBounds& bounds) {
  bounds.validate();
  if (x.size() != bounds.dim()) {
    throw std::invalid_argument("action dimension mismatch");
  }
  TransformedAction out;
  out.action.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0 && x[i] <= 1.0)) {
      throw std::invalid_argument("unit action outside [0, 1]");
    }
    const double k = bounds.scale(i);
    out.action[i] = x[i] * k + bounds.lower[i];
    out.log_correction -= std::log(k);
  }
  return out;
}

std::vector<double> untransform_action(std::span<const double> a,
                                       const ActionBounds& bounds,
                                       double tol) {
  bounds.validate();
  if (a.size() != bounds.dim()) {
    throw std::invalid_argument("action dimension mismatch");
  }
  std::vector<double> x(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double k = bounds.scale(i);
    if (!(a[i] >= bounds.lower[i] - tol * k && a[i] <= bounds.upper[i] + tol * k)) {
      throw std::invalid_argument("action outside bounds");
    }
    x[i] = std::clamp((a[i] - bounds.lower[i]) / k, kUnitClip, 1.0 - kUnitClip);
  }
  return x;
}

}  // namespace dpo
