#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "drivestyle/dataset.hpp"
#include "drivestyle/planner.hpp"
#include "drivestyle/style_label.hpp"

namespace drivestyle {

/// Linear reward r = theta . f over the normalized IRL features.
struct RewardWeights {
  std::optional<DrivingStyle> style;
  IrlFeatureVector theta{};

  nlohmann::json to_json() const;
  static RewardWeights from_json(const nlohmann::json& doc);
};

struct IrlConfig {
  double learning_rate = 0.05;
  int iterations = 200;
  double gradient_clip = 100.0;  // norm; 0 disables clipping
  std::uint64_t seed = 0;
  bool resample_each_iteration = false;
};

/// Accumulated features of one demonstration and of its candidate set. The
/// candidate set contains the demonstration itself.
struct DemoCandidates {
  IrlFeatureVector demo{};
  std::vector<IrlFeatureVector> candidates;
};

struct IrlIteration {
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  IrlFeatureVector theta{};
};
using IrlTrainLog = std::vector<IrlIteration>;

/// Throws UsageError on a dimension mismatch.
double trajectory_reward(std::span<const double> theta, std::span<const double> features);
double trajectory_reward(const IrlFeatureVector& theta, const IrlFeatureVector& features);

/// Softmax of the candidate rewards (max-subtracted).
std::vector<double> candidate_probabilities(const IrlFeatureVector& theta,
                                            std::span<const IrlFeatureVector> candidates);

/// Sum over demos of theta.f(demo) - log sum_i exp(theta.f(candidate_i)).
/// Per-demo terms are computed in parallel and reduced in demo order.
double log_likelihood(const IrlFeatureVector& theta, std::span<const DemoCandidates> demos);
double log_likelihood_serial(const IrlFeatureVector& theta, std::span<const DemoCandidates> demos);

/// Sum over demos of f(demo) - E_P[f(candidate)].
IrlFeatureVector gradient(const IrlFeatureVector& theta, std::span<const DemoCandidates> demos);
IrlFeatureVector gradient_serial(const IrlFeatureVector& theta, std::span<const DemoCandidates> demos);

struct IrlFitResult {
  RewardWeights weights;
  IrlTrainLog log;
};

/// Gradient ascent from theta = 0 on a frozen demo set. Throws UsageError on
/// an empty set.
IrlFitResult fit(std::span<const DemoCandidates> demos, const IrlConfig& config);

/// Same, with the demo set regenerated every iteration when
/// `config.resample_each_iteration` is set. `source(iteration)` must be
/// deterministic.
IrlFitResult fit(const std::function<std::vector<DemoCandidates>(int iteration)>& source, const IrlConfig& config);

// ---------------------------------------------------------------------------
// Demonstrations from recorded episodes.

/// One recorded window: `steps` states of track `track` from `start_step`.
struct DemoWindow {
  const Episode* episode = nullptr;
  std::size_t track = 0;
  int start_step = 0;
  int steps = 0;
};

/// Cuts every listed track into non-overlapping windows of `steps` samples.
std::vector<DemoWindow> demo_windows(const Episode& episode, std::span<const std::size_t> tracks, int steps);

/// Features of every window and of its sampled candidates (demo included).
/// Windows are processed in parallel; output order follows `windows`.
std::vector<DemoCandidates> build_demo_set(std::span<const DemoWindow> windows, const CandidateGrid& grid,
                                           const FeatureNormalizer& normalizer, std::uint64_t seed);

/// Raw per-step features of every listed window, for fitting a normalizer.
std::vector<IrlFeatureVector> raw_feature_corpus(std::span<const DemoWindow> windows);

}  // namespace drivestyle
