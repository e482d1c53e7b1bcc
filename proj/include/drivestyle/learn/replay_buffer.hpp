#pragma once

#include <cstddef>
#include <mutex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "drivestyle/dataset.hpp"
#include "drivestyle/learn/policy.hpp"

namespace drivestyle {

struct Transition {
  Observation observation;
  NormalizedAction action{};
  double reward = 0.0;
  Observation next_observation;
  bool terminal = false;
};

/// Column-wise training batch with scaled observations.
struct Batch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_obs;
  Eigen::VectorXd terminal;  // 1.0 for terminal transitions

  Eigen::Index size() const { return obs.cols(); }
};

/// Fixed-capacity ring of transitions. Insertion is thread-safe; sampling is
/// uniform with replacement.
class ReplayBuffer {
 public:
  /// Throws UsageError for zero capacity.
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_.at(i); }

  /// Throws UsageError when empty.
  std::vector<std::size_t> sample_indices(std::size_t batch, std::mt19937_64& rng) const;
  Batch sample(std::size_t batch, std::mt19937_64& rng, const ObservationScaler& scaler) const;
  Batch gather(const std::vector<std::size_t>& indices, const ObservationScaler& scaler) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
  mutable std::mutex mutex_;
};

}  // namespace drivestyle
