#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dpo/baseline.hpp"
#include "dpo/policy.hpp"

namespace dpo {

/// Every knob of a training run. Defaults follow the published table; the
/// batch size, epoch count and baseline updates depend on the learner.
struct RunConfig {
  std::string env = "pointmass";
  Learner learner = Learner::kPpo;
  long total_steps = 100000;
  std::uint64_t seed = 0;
  std::string out_dir = "run";

  double gamma = 0.99;
  double lambda = 0.95;
  double tau = 5e-3;
  double omega = 0.7;
  double nu = 0.3;
  double alpha = 0.03;
  double learning_rate = 3e-4;
  int minibatch = 256;         // from B
  int replay_minibatch = 256;  // from D
  long replay_capacity = 1000000;
  int m_actions = 30;
  int critic_samples = 25;
  int batch_size = 2048;
  int epochs = 10;
  int baseline_updates = 12;
  double ppo_clip = 0.2;
  double max_kl = 0.1;
  double damping = 0.1;
  int cg_iters = 10;
  double max_grad_norm = 100.0;
  long warmup = 2500;
  std::vector<int> hidden = {256, 256};
  long eval_interval = 4096;
  int eval_episodes = 10;

  static RunConfig for_learner(Learner learner);
  void validate() const;

  PolicyConfig policy_config() const;
  BaselineConfig baseline_config() const;

  /// Flat `key = value` lines in a fixed order.
  std::string to_text() const;
  /// Applies `key = value` lines on top of `base`. Unknown keys, malformed
  /// lines and unparsable values throw std::invalid_argument. A `learner`
  /// line resets the learner-dependent sizes before other keys apply.
  static RunConfig parse(const std::string& text);
  static RunConfig parse(const std::string& text, const RunConfig& base);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  bool operator==(const RunConfig&) const = default;
};

/// Splits `key = value` lines, skipping blanks and '#' comments.
std::vector<std::pair<std::string, std::string>> parse_key_values(
    const std::string& text);

}  // namespace dpo
