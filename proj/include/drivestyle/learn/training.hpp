#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "drivestyle/dataset.hpp"
#include "drivestyle/irl.hpp"
#include "drivestyle/learn/checkpoint.hpp"
#include "drivestyle/learn/replay_buffer.hpp"
#include "drivestyle/learn/rl.hpp"
#include "drivestyle/sim.hpp"

namespace drivestyle {

/// Per-step reward: feature_scale * theta . f_norm plus terminal event terms.
struct RewardShaping {
  double collision = -100.0;
  double off_road = -100.0;
  double goal = 100.0;
  double feature_scale = 1.0;

  double event_reward(const std::optional<EventKind>& event) const;
  nlohmann::json to_json() const;
  static RewardShaping from_json(const nlohmann::json& doc);
};

double feature_reward(const RewardWeights& weights, const FeatureNormalizer& normalizer,
                      const IrlFeatureVector& raw);

/// Logged transitions of the listed tracks. Actions are recovered from the
/// kinematics; the reward is theta . f_norm of the next state. Track ends are
/// time-limit truncations, never terminal.
std::vector<Transition> offline_transitions(const Episode& episode, std::span<const std::size_t> tracks,
                                            const RewardWeights& weights, const FeatureNormalizer& normalizer,
                                            const SimConfig& sim);

struct OfflineTrainResult {
  PolicyCheckpoint checkpoint;
  std::vector<Td3BcLosses> losses;  // one entry per gradient step
};

/// TD3+BC on a fixed dataset. Throws UsageError on an empty dataset.
OfflineTrainResult train_offline(std::span<const Transition> dataset, const Td3BcConfig& config,
                                 const ActionBounds& bounds, const ObservationScaler& scaler);

struct OnlineTrainConfig {
  SacConfig sac;
  long env_steps = 200000;
  long warmup_steps = 2000;
  int updates_per_step = 1;
  EpisodeMode::Kind mode = EpisodeMode::Kind::kSelfReplay;
  RewardShaping shaping;
  int log_every = 5000;
  /// Every `select_every` env steps the deterministic policy is replayed on
  /// the training episodes and the best-scoring weights are kept. 0 keeps
  /// the final weights.
  long select_every = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static OnlineTrainConfig from_json(const nlohmann::json& doc);
};

struct OnlineLogEntry {
  long env_steps = 0;
  long episodes = 0;
  double mean_agent_return = 0.0;
  double goal_rate = 0.0;
  double off_road_rate = 0.0;
  double collision_rate = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

/// Event rates of a deterministic policy driving every agent.
struct SelfReplayRates {
  double goal = 0.0;
  double off_road = 0.0;
  double collision = 0.0;
  long agents = 0;

  /// Goal rate minus failure rates.
  double score() const { return goal - off_road - collision; }
};

SelfReplayRates self_replay_rates(const GaussianPolicy& actor, const ObservationScaler& scaler,
                                  std::span<const Episode> episodes, const SimConfig& sim);

struct SelectionEntry {
  long env_steps = 0;
  SelfReplayRates rates;
};

struct OnlineTrainResult {
  PolicyCheckpoint checkpoint;
  std::vector<OnlineLogEntry> log;
  std::vector<SelectionEntry> selection;
  long selected_steps = 0;  // env steps of the returned weights
};

/// SAC with one shared policy for every acting agent and one shared replay
/// buffer. In self-replay every agent of the episode is driven by the shared
/// policy; in log-replay one ego per episode is, with the rest replayed.
/// `warm_start` must match the configured architecture.
OnlineTrainResult train_online_marl(std::span<const Episode> episodes, DrivingStyle style,
                                    const RewardWeights& weights, const FeatureNormalizer& normalizer,
                                    const SimConfig& sim, const OnlineTrainConfig& config,
                                    const ObservationScaler& scaler,
                                    const std::optional<PolicyCheckpoint>& warm_start);

}  // namespace drivestyle
