#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "drivestyle/dataset.hpp"
#include "drivestyle/style_label.hpp"

namespace drivestyle {

enum class RiskLevel : int { kLow = 0, kMedium = 1, kHigh = 2 };

struct RiskThresholds {
  double thw = 2.0;    // s
  double ittc = 0.25;  // 1/s
};

struct RiskMetrics {
  double thw = kThwCap;
  double ittc = 0.0;
};

/// Longitudinal relation to the same-lane lead. `closing_speed` is ego minus
/// lead, positive while the gap shrinks.
struct LeadGap {
  double distance = 0.0;
  double closing_speed = 0.0;
};

/// THW = d / v_ego and iTTC = max(v_rel, 0) / d. THW falls back to the cap
/// without a lead or below 0.1 m/s. Throws DataError for d <= 0.
RiskMetrics compute_risk_metrics(const std::optional<LeadGap>& lead, double v_ego);

/// Quadrant rule; the (high THW, high iTTC) quadrant cannot occur for
/// nonnegative lead speed and is mapped to Medium.
RiskLevel classify_risk(const RiskMetrics& metrics, const RiskThresholds& thresholds);

/// Same-lane lead of scene[ego], if any.
std::optional<LeadGap> lead_gap(std::span<const AgentState> scene, std::size_t ego, const RoadLayout& layout);

using RatioPoint = std::array<double, 3>;  // low, medium, high

struct RiskProfile {
  std::string agent_id;
  RatioPoint ratios{};
  double low() const { return ratios[0]; }
  double medium() const { return ratios[1]; }
  double high() const { return ratios[2]; }
};

RiskProfile risk_profile(const Episode& episode, std::string_view agent_id, const RiskThresholds& thresholds);
/// Profiles of every track, in track order. Parallel over agents.
std::vector<RiskProfile> risk_profiles(const Episode& episode, const RiskThresholds& thresholds);
std::vector<RiskProfile> risk_profiles_serial(const Episode& episode, const RiskThresholds& thresholds);

// ---------------------------------------------------------------------------
// k-means

struct KMeansOptions {
  int k = 3;
  std::uint64_t seed = 0;
  int max_iters = 300;
  int restarts = 10;
  double tolerance = 1e-9;  // centroid shift
};

struct KMeansRun {
  std::vector<RatioPoint> centroids;
  std::vector<int> assignments;
  double inertia = 0.0;
  /// Inertia after every assignment step.
  std::vector<double> inertia_history;
  int iterations = 0;
};

struct ClusteringModel {
  int k = 0;
  std::vector<RatioPoint> centroids;
  std::vector<int> assignments;
  std::vector<std::optional<DrivingStyle>> style_labels;
  double inertia = 0.0;
  /// One inertia trace per restart, in restart order.
  std::vector<std::vector<double>> inertia_histories;
};

/// One Lloyd run with k-means++ seeding.
KMeansRun kmeans_run(std::span<const RatioPoint> points, int k, std::uint64_t seed, int max_iters,
                     double tolerance);

/// Best of `restarts` runs by inertia, ties to the lower restart index.
/// Restarts run in parallel. Throws UsageError when points < k.
ClusteringModel kmeans_fit(std::span<const RatioPoint> points, const KMeansOptions& options);
ClusteringModel kmeans_fit_serial(std::span<const RatioPoint> points, const KMeansOptions& options);

struct ValidityIndices {
  double silhouette = 0.0;
  double davies_bouldin = 0.0;
  double calinski_harabasz = 0.0;
};

/// Throws UsageError for k < 2 or an empty cluster.
ValidityIndices validity_indices(std::span<const RatioPoint> points, std::span<const int> assignments, int k);
double silhouette(std::span<const RatioPoint> points, std::span<const int> assignments, int k);
double silhouette_serial(std::span<const RatioPoint> points, std::span<const int> assignments, int k);

/// Aggressive = max centroid high-risk ratio, Cautious = max low-risk ratio of
/// the rest, Normal = remaining. Ties go to the smaller medium ratio, then the
/// lower index. Returns all-empty labels unless k == 3.
std::vector<std::optional<DrivingStyle>> label_clusters(std::span<const RatioPoint> centroids);

// ---------------------------------------------------------------------------
// Export

struct StyleAssignment {
  std::string agent_key;  // "<episode id>/<agent id>"
  int cluster = -1;
  std::optional<DrivingStyle> style;
  RatioPoint ratios{};
};

nlohmann::json style_assignments_to_json(std::span<const StyleAssignment> assignments);
std::vector<StyleAssignment> style_assignments_from_json(const nlohmann::json& doc);

}  // namespace drivestyle
