#include "drivestyle/learn/replay_buffer.hpp"

#include "drivestyle/error.hpp"

namespace drivestyle {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw UsageError("replay buffer capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const Transition& t) {
  std::lock_guard lock(mutex_);
  if (data_.size() < capacity_) {
    data_.push_back(t);
  } else {
    data_[next_] = t;
  }
  next_ = (next_ + 1) % capacity_;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mutex_);
  return data_.size();
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, std::mt19937_64& rng) const {
  const std::size_t n = size();
  if (n == 0) throw UsageError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

Batch ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng, const ObservationScaler& scaler) const {
  return gather(sample_indices(batch, rng), scaler);
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& indices, const ObservationScaler& scaler) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch b;
  b.obs.resize(kObservationDim, n);
  b.next_obs.resize(kObservationDim, n);
  b.actions.resize(kActionDim, n);
  b.rewards.resize(n);
  b.terminal.resize(n);
  std::lock_guard lock(mutex_);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Transition& t = data_.at(indices[static_cast<std::size_t>(j)]);
    scaler.apply_into(t.observation, b.obs.col(j));
    scaler.apply_into(t.next_observation, b.next_obs.col(j));
    for (int d = 0; d < kActionDim; ++d) b.actions(d, j) = t.action[static_cast<std::size_t>(d)];
    b.rewards(j) = t.reward;
    b.terminal(j) = t.terminal ? 1.0 : 0.0;
  }
  return b;
}

}  // namespace drivestyle
