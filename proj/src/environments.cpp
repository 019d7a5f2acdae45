#include "dpo/environments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dpo {

StepResult ContinuousEnv::step(const EnvState& state,
                               std::span<const double> action,
                               Rng& rng) const {
  if (!bounds_.contains(action, 1e-12)) {
    throw std::invalid_argument(name() + ": action outside bounds");
  }
  StepResult out = advance(state, action, rng);
  out.next.t = state.t + 1;
  out.truncated = !out.terminal && out.next.t >= horizon_;
  return out;
}

// --- PointMass2D ----------------------------------------------------------

PointMass2D::PointMass2D() : ContinuousEnv(ActionBounds({-1, -1}, {1, 1}), 100) {}

double PointMass2D::reward_bound() const {
  return 2.0 * kWall * kWall + 0.01 * 2.0;
}

EnvState PointMass2D::reset(Rng& rng) const {
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  EnvState s;
  s.x = {pos(rng), pos(rng), 0.0, 0.0};
  return s;
}

std::vector<double> PointMass2D::observe(const EnvState& state) const {
  return state.x;
}

StepResult PointMass2D::advance(const EnvState& state,
                                std::span<const double> action, Rng&) const {
  StepResult out;
  out.next.x = state.x;
  auto& x = out.next.x;
  for (int i = 0; i < 2; ++i) {
    x[2 + i] += kDt * action[i];
    x[i] += kDt * x[2 + i];
    if (std::abs(x[i]) > kWall) {
      x[i] = std::clamp(x[i], -kWall, kWall);
      x[2 + i] = 0.0;
    }
  }
  const double dist2 = x[0] * x[0] + x[1] * x[1];
  const double effort = action[0] * action[0] + action[1] * action[1];
  out.reward = -dist2 - 0.01 * effort;
  return out;
}

// --- Pendulum1D -----------------------------------------------------------

Pendulum1D::Pendulum1D()
    : ContinuousEnv(ActionBounds({-kMaxTorque}, {kMaxTorque}), 200) {}

double Pendulum1D::reward_bound() const {
  return std::numbers::pi * std::numbers::pi + 0.1 * kMaxSpeed * kMaxSpeed +
         0.001 * kMaxTorque * kMaxTorque;
}

EnvState Pendulum1D::reset(Rng& rng) const {
  EnvState s;
  s.x = {std::uniform_real_distribution<double>(-std::numbers::pi,
                                                std::numbers::pi)(rng),
         std::uniform_real_distribution<double>(-1.0, 1.0)(rng)};
  return s;
}

std::vector<double> Pendulum1D::observe(const EnvState& state) const {
  return {std::cos(state.x[0]), std::sin(state.x[0]), state.x[1]};
}

StepResult Pendulum1D::advance(const EnvState& state,
                               std::span<const double> action, Rng&) const {
  const double theta = state.x[0];
  const double omega = state.x[1];
  const double u = action[0];
  // Wrapped angle in [-pi, pi).
  const double wrapped =
      std::remainder(theta, 2.0 * std::numbers::pi);
  StepResult out;
  out.reward = -(wrapped * wrapped + 0.1 * omega * omega + 0.001 * u * u);
  // Unit mass and length; gravity pulls away from upright.
  double next_omega =
      omega + (3.0 * kGravity / 2.0 * std::sin(theta) + 3.0 * u) * kDt;
  next_omega = std::clamp(next_omega, -kMaxSpeed, kMaxSpeed);
  const double next_theta =
      std::remainder(theta + next_omega * kDt, 2.0 * std::numbers::pi);
  out.next.x = {next_theta, next_omega};
  return out;
}

// --- Lqr1D ----------------------------------------------------------------

Lqr1D::Lqr1D() : ContinuousEnv(ActionBounds({-kMaxAction}, {kMaxAction}), 100) {}

double Lqr1D::reward_bound() const {
  return kStateCost * kStateClip * kStateClip +
         kActionCost * kMaxAction * kMaxAction;
}

EnvState Lqr1D::reset(Rng& rng) const {
  EnvState s;
  s.x = {std::uniform_real_distribution<double>(-kInitRange, kInitRange)(rng)};
  return s;
}

std::vector<double> Lqr1D::observe(const EnvState& state) const {
  return state.x;
}

StepResult Lqr1D::advance(const EnvState& state, std::span<const double> action,
                          Rng& rng) const {
  const double x = state.x[0];
  const double a = action[0];
  StepResult out;
  out.reward = -(kStateCost * x * x + kActionCost * a * a);
  const double next = kA * x + kB * a + kNoise * standard_normal(rng);
  out.next.x = {std::clamp(next, -kStateClip, kStateClip)};
  return out;
}

std::unique_ptr<ContinuousEnv> make_env(const std::string& name) {
  if (name == "pointmass") return std::make_unique<PointMass2D>();
  if (name == "pendulum") return std::make_unique<Pendulum1D>();
  if (name == "lqr1d") return std::make_unique<Lqr1D>();
  throw std::invalid_argument("unknown environment: " + name);
}

double lqr_optimal_return(const Lqr1D& env) {
  // Cost-to-go J_t(x) = P_t x^2 + c_t with P_H = 0, c_H = 0.
  const int horizon = env.horizon();
  std::vector<double> p(static_cast<std::size_t>(horizon) + 1, 0.0);
  for (int t = horizon - 1; t >= 0; --t) {
    const double next = p[t + 1];
    const double gain_num = Lqr1D::kA * Lqr1D::kB * next;
    p[t] = Lqr1D::kStateCost + Lqr1D::kA * Lqr1D::kA * next -
           gain_num * gain_num / (Lqr1D::kActionCost + Lqr1D::kB * Lqr1D::kB * next);
  }
  double noise_cost = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    noise_cost += Lqr1D::kNoise * Lqr1D::kNoise * p[t];
  }
  const double init_second_moment = Lqr1D::kInitRange * Lqr1D::kInitRange / 3.0;
  return -(p[0] * init_second_moment + noise_cost);
}

}  // namespace dpo
