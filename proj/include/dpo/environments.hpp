#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dpo/distributions.hpp"
#include "dpo/rng.hpp"

namespace dpo {

/// Internal simulator state plus the elapsed step count.
struct EnvState {
  std::vector<double> x;
  int t = 0;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool terminal = false;   // the task ended; no bootstrap
  bool truncated = false;  // time limit reached; bootstrap through it
};

/// Continuous-control task with pure, seeded dynamics: step() is a function
/// of (state, action, rng state) only.
class ContinuousEnv {
 public:
  virtual ~ContinuousEnv() = default;

  virtual std::string name() const = 0;
  virtual int observation_dim() const = 0;
  virtual int action_dim() const { return static_cast<int>(bounds_.dim()); }
  const ActionBounds& bounds() const { return bounds_; }
  int horizon() const { return horizon_; }
  /// Declared bound on |reward| per step.
  virtual double reward_bound() const = 0;

  virtual EnvState reset(Rng& rng) const = 0;
  virtual std::vector<double> observe(const EnvState& state) const = 0;

  /// Throws std::invalid_argument for out-of-bounds actions.
  StepResult step(const EnvState& state, std::span<const double> action,
                  Rng& rng) const;

 protected:
  ContinuousEnv(ActionBounds bounds, int horizon)
      : bounds_(std::move(bounds)), horizon_(horizon) {}

  virtual StepResult advance(const EnvState& state,
                             std::span<const double> action, Rng& rng) const = 0;

 private:
  ActionBounds bounds_;
  int horizon_;
};

/// 2-D point mass pushed by a bounded force toward the origin.
/// State (px, py, vx, vy); reward -|p|^2 - 0.01 |a|^2.
class PointMass2D final : public ContinuousEnv {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kWall = 2.0;

  PointMass2D();
  std::string name() const override { return "pointmass"; }
  int observation_dim() const override { return 4; }
  double reward_bound() const override;
  EnvState reset(Rng& rng) const override;
  std::vector<double> observe(const EnvState& state) const override;

 protected:
  StepResult advance(const EnvState& state, std::span<const double> action,
                     Rng& rng) const override;
};

/// Torque-limited pendulum; angle 0 is upright. Observation (cos, sin, omega).
class Pendulum1D final : public ContinuousEnv {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;

  Pendulum1D();
  std::string name() const override { return "pendulum"; }
  int observation_dim() const override { return 3; }
  double reward_bound() const override;
  EnvState reset(Rng& rng) const override;
  std::vector<double> observe(const EnvState& state) const override;

 protected:
  StepResult advance(const EnvState& state, std::span<const double> action,
                     Rng& rng) const override;
};

/// Scalar linear system x' = 0.9 x + 0.5 a + noise, reward -(x^2 + 0.1 a^2).
class Lqr1D final : public ContinuousEnv {
 public:
  static constexpr double kA = 0.9;
  static constexpr double kB = 0.5;
  static constexpr double kStateCost = 1.0;
  static constexpr double kActionCost = 0.1;
  static constexpr double kNoise = 0.05;
  static constexpr double kInitRange = 1.5;  // x0 ~ U[-1.5, 1.5]
  static constexpr double kStateClip = 10.0;
  static constexpr double kMaxAction = 3.0;

  Lqr1D();
  std::string name() const override { return "lqr1d"; }
  int observation_dim() const override { return 1; }
  double reward_bound() const override;
  EnvState reset(Rng& rng) const override;
  std::vector<double> observe(const EnvState& state) const override;

 protected:
  StepResult advance(const EnvState& state, std::span<const double> action,
                     Rng& rng) const override;
};

/// "pointmass", "pendulum" or "lqr1d".
std::unique_ptr<ContinuousEnv> make_env(const std::string& name);

/// Expected episodic return of the optimal (unconstrained, time-varying)
/// controller of Lqr1D over its initial-state distribution, from the
/// finite-horizon Riccati recursion.
double lqr_optimal_return(const Lqr1D& env);

}  // namespace dpo
