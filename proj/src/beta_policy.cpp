#include "dpo/beta_policy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace dpo {

namespace {

Eigen::MatrixXd softplus_plus_one(const Eigen::MatrixXd& raw) {
  return raw.unaryExpr([](double v) { return softplus(v) + 1.0; });
}

}  // namespace

BetaParams BetaShapes::at(Eigen::Index col) const {
  BetaParams p;
  p.alpha.resize(static_cast<std::size_t>(alpha.rows()));
  p.beta.resize(static_cast<std::size_t>(alpha.rows()));
  for (Eigen::Index i = 0; i < alpha.rows(); ++i) {
    p.alpha[i] = alpha(i, col);
    p.beta[i] = beta(i, col);
  }
  return p;
}

BetaPolicy::BetaPolicy(int obs_dim, ActionBounds bounds, std::vector<int> hidden,
                       Rng& rng)
    : BetaPolicy(Network(MlpSpec::make(obs_dim, std::move(hidden),
                                       2 * static_cast<int>(bounds.dim())),
                         rng),
                 bounds) {}

BetaPolicy::BetaPolicy(Network net, ActionBounds bounds)
    : net_(std::move(net)), bounds_(std::move(bounds)) {
  bounds_.validate();
  if (net_.spec.output_dim != 2 * static_cast<int>(bounds_.dim())) {
    throw std::invalid_argument("policy head must emit two shapes per action");
  }
  for (std::size_t i = 0; i < bounds_.dim(); ++i) {
    log_correction_ -= std::log(bounds_.scale(i));
  }
}

BetaShapes BetaPolicy::shapes(const Batch& obs) const {
  BetaShapes s;
  s.raw = net_.forward(obs);
  const Eigen::Index d = action_dim();
  s.alpha = softplus_plus_one(s.raw.topRows(d));
  s.beta = softplus_plus_one(s.raw.bottomRows(d));
  return s;
}

PolicyDraw BetaPolicy::sample(const Batch& obs, Rng& rng) const {
  return sample(shapes(obs), rng);
}

PolicyDraw BetaPolicy::sample(const BetaShapes& shapes, Rng& rng) const {
  PolicyDraw out;
  out.unit.resize(shapes.alpha.rows(), shapes.alpha.cols());
  // One engine for the whole batch keeps the cached second normal draw.
  std::gamma_distribution<double> gamma;
  using Shape = std::gamma_distribution<double>::param_type;
  for (Eigen::Index j = 0; j < shapes.alpha.cols(); ++j) {
    for (Eigen::Index i = 0; i < shapes.alpha.rows(); ++i) {
      const double g1 = gamma(rng, Shape(shapes.alpha(i, j), 1.0));
      const double g2 = gamma(rng, Shape(shapes.beta(i, j), 1.0));
      out.unit(i, j) = std::clamp(g1 / (g1 + g2), kUnitClip, 1.0 - kUnitClip);
    }
  }
  out.action = to_action(out.unit);
  return out;
}

Eigen::VectorXd BetaPolicy::log_density(const BetaShapes& shapes,
                                        const Batch& unit) {
  if (unit.rows() != shapes.alpha.rows() || unit.cols() != shapes.alpha.cols()) {
    throw std::invalid_argument("unit action batch shape mismatch");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(unit.cols());
  for (Eigen::Index j = 0; j < unit.cols(); ++j) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < unit.rows(); ++i) {
      const double a = shapes.alpha(i, j);
      const double b = shapes.beta(i, j);
      const double x = unit(i, j);
      if (!(x > 0.0 && x < 1.0)) {
        throw std::invalid_argument("unit action outside (0, 1)");
      }
      total += (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
               log_beta_function(a, b);
    }
    out[j] = total;
  }
  return out;
}

Eigen::VectorXd BetaPolicy::log_prob(const Batch& obs, const Batch& unit) const {
  Eigen::VectorXd lp = log_density(shapes(obs), unit);
  lp.array() += log_correction_;
  return lp;
}

void BetaPolicy::accumulate_log_prob_grad(const Batch& obs, const Batch& unit,
                                          const Eigen::VectorXd& weights) {
  const BetaShapes s = shapes(obs);
  if (weights.size() != unit.cols() || unit.cols() != obs.cols()) {
    throw std::invalid_argument("weight count mismatch");
  }
  const Eigen::Index d = action_dim();
  Batch head_grad(2 * d, obs.cols());
  for (Eigen::Index j = 0; j < obs.cols(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double a = s.alpha(i, j);
      const double b = s.beta(i, j);
      const double common = digamma(a + b);
      const double da = std::log(unit(i, j)) - digamma(a) + common;
      const double db = std::log1p(-unit(i, j)) - digamma(b) + common;
      head_grad(i, j) = weights[j] * da * sigmoid(s.raw(i, j));
      head_grad(d + i, j) = weights[j] * db * sigmoid(s.raw(d + i, j));
    }
  }
  net_.backward(obs, head_grad);
}

Batch BetaPolicy::mean_action(const Batch& obs) const {
  const BetaShapes s = shapes(obs);
  const Batch unit = s.alpha.cwiseQuotient(s.alpha + s.beta);
  return to_action(unit);
}

Eigen::VectorXd BetaPolicy::entropy(const Batch& obs) const {
  const BetaShapes s = shapes(obs);
  Eigen::VectorXd out(obs.cols());
  for (Eigen::Index j = 0; j < obs.cols(); ++j) out[j] = beta_entropy(s.at(j));
  return out;
}

Eigen::VectorXd BetaPolicy::kl_from(const BetaShapes& old, const Batch& obs) const {
  const BetaShapes s = shapes(obs);
  if (old.size() != s.size()) throw std::invalid_argument("batch size mismatch");
  Eigen::VectorXd out(obs.cols());
  for (Eigen::Index j = 0; j < obs.cols(); ++j) {
    out[j] = beta_kl(old.at(j), s.at(j));
  }
  return out;
}

std::vector<double> BetaPolicy::fisher_vector_product(
    const Batch& obs, std::span<const double> v) const {
  const BetaShapes s = shapes(obs);
  const Eigen::Index d = action_dim();
  const Batch d_raw = jvp_batch(net_.spec, net_.params, obs, v);
  Batch out_grad(2 * d, obs.cols());
  const double inv_n = 1.0 / static_cast<double>(obs.cols());
  for (Eigen::Index j = 0; j < obs.cols(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double a = s.alpha(i, j);
      const double b = s.beta(i, j);
      const double sa = sigmoid(s.raw(i, j));
      const double sb = sigmoid(s.raw(d + i, j));
      const double da = sa * d_raw(i, j);
      const double db = sb * d_raw(d + i, j);
      const double tab = trigamma(a + b);
      const double fa = (trigamma(a) - tab) * da - tab * db;
      const double fb = -tab * da + (trigamma(b) - tab) * db;
      out_grad(i, j) = inv_n * sa * fa;
      out_grad(d + i, j) = inv_n * sb * fb;
    }
  }
  ParamVector scratch = net_.params;
  scratch.zero_grad();
  backward_batch(net_.spec, scratch, obs, out_grad);
  return {scratch.grads.begin(), scratch.grads.end()};
}

Batch BetaPolicy::to_action(const Batch& unit) const {
  Batch a(unit.rows(), unit.cols());
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    a.row(i) = unit.row(i).array() * bounds_.scale(i) + bounds_.lower[i];
  }
  return a;
}

Batch BetaPolicy::to_unit(const Batch& action) const {
  Batch x(action.rows(), action.cols());
  for (Eigen::Index j = 0; j < action.cols(); ++j) {
    const std::vector<double> col(action.col(j).data(),
                                  action.col(j).data() + action.rows());
    const std::vector<double> u = untransform_action(col, bounds_);
    for (Eigen::Index i = 0; i < action.rows(); ++i) x(i, j) = u[i];
  }
  return x;
}

}  // namespace dpo
