#pragma once

#include <array>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "drivestyle/dataset.hpp"
#include "drivestyle/learn/mlp.hpp"
#include "drivestyle/sim.hpp"

namespace drivestyle {

inline constexpr int kActionDim = 2;  // accel, steering rate
using NormalizedAction = std::array<double, kActionDim>;

/// Box action space. Normalized actions in [-1, 1] map affinely onto it.
struct ActionBounds {
  NormalizedAction low{-9.81, -0.5};
  NormalizedAction high{5.0, 0.5};

  static ActionBounds from_sim(const SimConfig& config);
  double center(int d) const { return 0.5 * (low[d] + high[d]); }
  double half_range(int d) const { return 0.5 * (high[d] - low[d]); }
  Action to_action(const NormalizedAction& normalized) const;
  /// Inverse map, clamped just inside (-1, 1).
  NormalizedAction normalize(const Action& action) const;

  nlohmann::json to_json() const;
  static ActionBounds from_json(const nlohmann::json& doc);
  bool operator==(const ActionBounds&) const = default;
};

/// Fixed affine observation scaling, (obs - offset) / scale.
struct ObservationScaler {
  std::array<double, kObservationDim> offset{};
  std::array<double, kObservationDim> scale{};

  ObservationScaler() { scale.fill(1.0); }
  /// Hand-set ranges for highway traffic.
  static ObservationScaler highway();

  Eigen::VectorXd apply(const Observation& obs) const;
  void apply_into(const Observation& obs, Eigen::Ref<Eigen::VectorXd> out) const;

  nlohmann::json to_json() const;
  static ObservationScaler from_json(const nlohmann::json& doc);
  bool operator==(const ObservationScaler&) const = default;
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

/// Tanh-squashed diagonal Gaussian policy. The trunk outputs kActionDim means
/// followed by kActionDim log standard deviations.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  /// Throws UsageError unless the trunk outputs 2 * kActionDim values.
  GaussianPolicy(Mlp trunk, ActionBounds bounds);
  static GaussianPolicy random(int obs_dim, const std::vector<int>& hidden, ActionBounds bounds,
                               std::mt19937_64& rng);

  struct Sample {
    Mlp::Cache cache;
    Eigen::MatrixXd raw_log_std;  // before clamping
    Eigen::MatrixXd std;
    Eigen::MatrixXd noise;
    Eigen::MatrixXd squashed;  // tanh(u), the normalized action
    Eigen::MatrixXd action;    // in bounds
    Eigen::VectorXd log_prob;  // density of `action`
  };

  /// `noise` is standard normal (kActionDim x batch). With `deterministic`
  /// the noise is ignored and u = mean.
  Sample sample(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& noise, bool deterministic) const;

  /// Adds to `grad` the trunk gradient of a loss given dL/d(squashed) and
  /// dL/d(log_prob).
  void backward(const Sample& sample, const Eigen::MatrixXd& d_squashed, const Eigen::VectorXd& d_log_prob,
                Eigen::VectorXd& grad) const;

  Mlp& trunk() { return trunk_; }
  const Mlp& trunk() const { return trunk_; }
  const ActionBounds& bounds() const { return bounds_; }

  bool operator==(const GaussianPolicy& other) const {
    return trunk_ == other.trunk_ && bounds_ == other.bounds_;
  }

 private:
  Mlp trunk_;
  ActionBounds bounds_;
};

/// Actor, twin critics and their target copies. Critics read the scaled
/// observation stacked on the normalized action.
struct ActorCritic {
  GaussianPolicy actor;
  GaussianPolicy actor_target;
  Mlp q1;
  Mlp q2;
  Mlp q1_target;
  Mlp q2_target;

  static ActorCritic random(const std::vector<int>& hidden, ActionBounds bounds, std::uint64_t seed);
  bool operator==(const ActorCritic&) const = default;
};

/// Stacks observation and normalized action rows into a critic input.
Eigen::MatrixXd critic_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions);

/// Adapter that drives simulator agents with a trained actor.
class NeuralDrivingPolicy final : public DrivingPolicy {
 public:
  NeuralDrivingPolicy(const GaussianPolicy& actor, const ObservationScaler& scaler, bool deterministic);
  Action act(const PolicyInput& input, std::mt19937_64& rng) const override;

 private:
  const GaussianPolicy* actor_;
  ObservationScaler scaler_;
  bool deterministic_;
};

}  // namespace drivestyle
