#include "dpo/replay.hpp"

#include <stdexcept>

#include "dpo/policy.hpp"

namespace dpo {

ReplayBuffer::ReplayBuffer(int obs_dim, int action_dim, std::size_t capacity)
    : obs_dim_(obs_dim), action_dim_(action_dim), capacity_(capacity) {
  if (obs_dim < 1 || action_dim < 1 || capacity < 1) {
    throw std::invalid_argument("replay buffer dimensions must be positive");
  }
}

void ReplayBuffer::add(const Transition& t) {
  if (t.obs.size() != static_cast<std::size_t>(obs_dim_) ||
      t.next_obs.size() != static_cast<std::size_t>(obs_dim_) ||
      t.action.size() != static_cast<std::size_t>(action_dim_)) {
    throw std::invalid_argument("transition dimension mismatch");
  }
  if (size_ < capacity_) {
    obs_.insert(obs_.end(), t.obs.begin(), t.obs.end());
    actions_.insert(actions_.end(), t.action.begin(), t.action.end());
    rewards_.push_back(t.reward);
    next_obs_.insert(next_obs_.end(), t.next_obs.begin(), t.next_obs.end());
    terminals_.push_back(t.terminal ? 1 : 0);
    ++size_;
  } else {
    const std::size_t i = cursor_;
    std::copy(t.obs.begin(), t.obs.end(), obs_.begin() + i * obs_dim_);
    std::copy(t.action.begin(), t.action.end(), actions_.begin() + i * action_dim_);
    rewards_[i] = t.reward;
    std::copy(t.next_obs.begin(), t.next_obs.end(), next_obs_.begin() + i * obs_dim_);
    terminals_[i] = t.terminal ? 1 : 0;
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

Transition ReplayBuffer::get(std::size_t index) const {
  if (index >= size_) throw std::out_of_range("replay index");
  Transition t;
  const auto o = obs_.begin() + static_cast<std::ptrdiff_t>(index * obs_dim_);
  const auto a = actions_.begin() + static_cast<std::ptrdiff_t>(index * action_dim_);
  const auto n = next_obs_.begin() + static_cast<std::ptrdiff_t>(index * obs_dim_);
  t.obs.assign(o, o + obs_dim_);
  t.action.assign(a, a + action_dim_);
  t.reward = rewards_[index];
  t.next_obs.assign(n, n + obs_dim_);
  t.terminal = terminals_[index] != 0;
  return t;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (size_ == 0) throw std::logic_error("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = pick(rng);
  return out;
}

Batch ReplayBuffer::gather_obs(const std::vector<std::size_t>& indices,
                               const RunningNormalizer* norm) const {
  Batch obs(obs_dim_, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= size_) throw std::out_of_range("replay index");
    for (int i = 0; i < obs_dim_; ++i) obs(i, j) = obs_[indices[j] * obs_dim_ + i];
  }
  return norm != nullptr ? norm->normalize(obs) : obs;
}

TransitionBatch ReplayBuffer::gather(const std::vector<std::size_t>& indices,
                                     const RunningNormalizer* norm,
                                     const RewardScaler* scaler) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  TransitionBatch b;
  b.obs = gather_obs(indices, norm);
  b.actions.resize(action_dim_, n);
  b.rewards.resize(n);
  b.next_obs.resize(obs_dim_, n);
  b.terminals.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t k = indices[j];
    for (int i = 0; i < action_dim_; ++i) b.actions(i, j) = actions_[k * action_dim_ + i];
    for (int i = 0; i < obs_dim_; ++i) b.next_obs(i, j) = next_obs_[k * obs_dim_ + i];
    b.rewards[j] = scaler != nullptr ? scaler->scale(rewards_[k]) : rewards_[k];
    b.terminals[j] = terminals_[k];
  }
  if (norm != nullptr) b.next_obs = norm->normalize(b.next_obs);
  return b;
}

}  // namespace dpo
