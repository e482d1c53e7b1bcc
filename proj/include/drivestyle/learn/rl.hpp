#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "drivestyle/learn/mlp.hpp"
#include "drivestyle/learn/policy.hpp"
#include "drivestyle/learn/replay_buffer.hpp"

namespace drivestyle {

struct Td3BcConfig {
  double learning_rate = 3e-4;
  int batch_size = 128;
  double gamma = 0.99;
  double tau = 0.005;
  int policy_delay = 2;
  double target_noise = 0.2;
  double noise_clip = 0.5;
  double bc_alpha = 2.5;
  int gradient_steps = 10000;
  std::vector<int> hidden{256, 256};
  std::uint64_t seed = 0;

  /// Throws UsageError on out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;
  static Td3BcConfig from_json(const nlohmann::json& doc);
};

struct SacConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;
  double gamma = 0.99;
  double tau = 0.005;
  double alpha = 0.2;
  std::size_t buffer_size = 100000;
  std::vector<int> hidden{256, 256};
  bool entropy_inside_discount = false;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SacConfig from_json(const nlohmann::json& doc);
};

struct Optimizers {
  Adam actor;
  Adam q1;
  Adam q2;

  static Optimizers make(const ActorCritic& net, double actor_lr, double critic_lr);
};

/// Mean squared error (1/N) sum (y - Q)^2 of one critic. Adds the parameter
/// gradient to `grad` when non-null.
double critic_loss(const Mlp& critic, const Eigen::MatrixXd& input, const Eigen::VectorXd& targets,
                   Eigen::VectorXd* grad);

// ---------------------------------------------------------------------------
// TD3+BC

/// alpha / max(mean |Q|, 1e-8). Throws UsageError on an empty batch.
double td3bc_lambda(const Eigen::VectorXd& q_values, double alpha);

/// Deterministic actor output tanh(mean), the normalized action.
Eigen::MatrixXd deterministic_action(const GaussianPolicy& actor, const Eigen::MatrixXd& obs);

/// (1/N) sum [ -lambda Q1(s, pi(s)) + |pi(s) - a|^2 ], minimized by the actor.
double td3bc_actor_loss(const GaussianPolicy& actor, const Mlp& q1, const Eigen::MatrixXd& obs,
                        const Eigen::MatrixXd& actions, double lambda, Eigen::VectorXd* grad);

/// r + gamma (1 - terminal) min_j Q'_j(s', clip(pi'(s') + clipped noise)).
Eigen::VectorXd td3bc_targets(const ActorCritic& net, const Batch& batch, const Td3BcConfig& config,
                              std::mt19937_64& rng);

struct Td3BcLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
  double lambda = 0.0;
  bool actor_updated = false;
};

/// One TD3+BC step; the actor and targets move every policy_delay steps.
/// `step` counts from 0.
Td3BcLosses td3bc_update(ActorCritic& net, Optimizers& opt, const Batch& batch, const Td3BcConfig& config,
                         long step, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// SAC

/// r + gamma min Q' - alpha log pi, both bootstrap terms dropped when
/// terminal. With `entropy_inside_discount` the entropy term is discounted.
double sac_td_target(double reward, double min_q_next, double log_prob_next, bool terminal, double alpha,
                     double gamma, bool entropy_inside_discount = false);

Eigen::VectorXd sac_targets(const ActorCritic& net, const Batch& batch, const SacConfig& config,
                            const Eigen::MatrixXd& next_noise);

/// (1/N) sum [ alpha log pi(a~|s) - min_j Q_j(s, a~) ] with a~ reparameterized
/// from `noise`.
double sac_actor_loss(const GaussianPolicy& actor, const Mlp& q1, const Mlp& q2, const Eigen::MatrixXd& obs,
                      const Eigen::MatrixXd& noise, double alpha, Eigen::VectorXd* grad);

struct SacLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
};

SacLosses sac_update(ActorCritic& net, Optimizers& opt, const Batch& batch, const SacConfig& config,
                     std::mt19937_64& rng);

Eigen::MatrixXd standard_normal(int rows, Eigen::Index cols, std::mt19937_64& rng);

}  // namespace drivestyle
