#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dpo/critic.hpp"
#include "dpo/rng.hpp"

namespace dpo {

class RunningNormalizer;
class RewardScaler;

/// One environment step in raw (unnormalized) units.
struct Transition {
  std::vector<double> obs;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool terminal = false;
};

/// Fixed-capacity ring of transitions. Storage grows until full, then the
/// oldest entry is overwritten.
class ReplayBuffer {
 public:
  ReplayBuffer(int obs_dim, int action_dim, std::size_t capacity = 1000000);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t cursor() const { return cursor_; }
  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return action_dim_; }

  void add(const Transition& t);
  Transition get(std::size_t index) const;

  /// n indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

  /// Gathers the given rows; observations pass through `norm` and rewards
  /// through `scaler` when those are non-null.
  TransitionBatch gather(const std::vector<std::size_t>& indices,
                         const RunningNormalizer* norm,
                         const RewardScaler* scaler) const;
  /// Observations only, normalized.
  Batch gather_obs(const std::vector<std::size_t>& indices,
                   const RunningNormalizer* norm) const;

 private:
  int obs_dim_;
  int action_dim_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::vector<double> obs_;
  std::vector<double> actions_;
  std::vector<double> rewards_;
  std::vector<double> next_obs_;
  std::vector<unsigned char> terminals_;
};

}  // namespace dpo
