#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "drivestyle/geometry.hpp"

namespace drivestyle {

struct AgentTrack {
  std::string agent_id;
  int start_step = 0;
  double length_m = 4.5;
  double width_m = 1.8;
  std::vector<AgentState> states;

  int end_step() const { return start_step + static_cast<int>(states.size()); }
  bool alive_at(int step) const { return step >= start_step && step < end_step(); }
  const AgentState& at(int step) const { return states.at(static_cast<std::size_t>(step - start_step)); }
};

struct Episode {
  std::string id;
  double delta_t = 0.1;
  RoadLayout layout;
  std::vector<AgentTrack> tracks;

  /// Throws DataError if no track carries `agent_id`.
  const AgentTrack& track(std::string_view agent_id) const;
  std::optional<std::size_t> track_index(std::string_view agent_id) const;
  /// One past the last step at which any agent is alive.
  int step_count() const;
};

Episode episode_from_json(const nlohmann::json& doc);
nlohmann::json episode_to_json(const Episode& episode);
/// Canonical serialized form: sorted keys, shortest round-trip doubles.
std::string episode_to_string(const Episode& episode);
Episode load_episode(const std::filesystem::path& path);
void save_episode(const Episode& episode, const std::filesystem::path& path);

/// All agents alive at one step, with the track each state came from.
struct Scene {
  std::vector<AgentState> states;
  std::vector<std::size_t> track_indices;
};
Scene scene_at(const Episode& episode, int step);

// ---------------------------------------------------------------------------
// Neighbors and the 34-dimensional observation.

enum class NeighborSlot : int {
  kSameFront = 0,
  kSameRear = 1,
  kLeftFront = 2,
  kLeftRear = 3,
  kRightFront = 4,
  kRightRear = 5,
};
inline constexpr int kNeighborSlots = 6;

/// Nearest vehicle (by |dx|) per slot, as indices into the scene.
using NeighborSet = std::array<std::optional<std::size_t>, kNeighborSlots>;
NeighborSet find_neighbors(std::span<const AgentState> scene, std::size_t ego, const RoadLayout& layout);

inline constexpr int kEgoFeatures = 4;
inline constexpr int kNeighborFeatures = 5;
inline constexpr int kObservationDim = kEgoFeatures + kNeighborSlots * kNeighborFeatures;
static_assert(kObservationDim == 34);

inline constexpr double kSentinelDistance = 100.0;

/// Ego block (speed, heading, d_left, d_right) followed by six neighbor
/// blocks (heading, rel_long, rel_lat, rel_speed, rel_accel) in slot order.
struct Observation {
  std::array<double, kObservationDim> values{};

  double& at(int i) { return values[static_cast<std::size_t>(i)]; }
  double at(int i) const { return values[static_cast<std::size_t>(i)]; }
  static int neighbor_offset(NeighborSlot slot) {
    return kEgoFeatures + static_cast<int>(slot) * kNeighborFeatures;
  }
};

Observation observe(std::span<const AgentState> scene, std::size_t ego, const RoadLayout& layout);
/// Throws DataError if the agent is not alive at `step`.
Observation build_observation(const Episode& episode, std::string_view agent_id, int step);

// ---------------------------------------------------------------------------
// IRL features.

enum IrlFeature : int {
  kVEgo = 0,
  kALong,
  kALat,
  kJLong,
  kThwFront,
  kThwRear,
  kDCenterline,
  kDCenterlineRate,
  kAvailLeft,
  kAvailRight,
};
inline constexpr int kIrlFeatureCount = 10;
using IrlFeatureVector = std::array<double, kIrlFeatureCount>;
extern const std::array<std::string_view, kIrlFeatureCount> kIrlFeatureNames;

inline constexpr double kThwCap = 10.0;
inline constexpr double kThwMinSpeed = 0.1;

/// Raw per-step features of `scene[ego]`. `previous` is the ego's state one
/// step earlier; rates are zero without it.
IrlFeatureVector irl_features(std::span<const AgentState> scene, std::size_t ego,
                              const AgentState* previous, const RoadLayout& layout, double delta_t);
IrlFeatureVector extract_irl_features(const Episode& episode, std::string_view agent_id, int step);

/// True when the lane exists and no vehicle sits inside the longitudinal gap
/// window 0.5 * (L_ego + L_other) + 2 m.
bool lane_available(std::span<const AgentState> scene, std::size_t ego, int lane, const RoadLayout& layout);

class FeatureNormalizer {
 public:
  FeatureNormalizer() { min_.fill(0.0); max_.fill(0.0); }
  FeatureNormalizer(const IrlFeatureVector& min, const IrlFeatureVector& max);

  /// Throws DataError on an empty corpus.
  static FeatureNormalizer fit(std::span<const IrlFeatureVector> corpus);

  IrlFeatureVector apply(const IrlFeatureVector& raw) const;

  const IrlFeatureVector& min() const { return min_; }
  const IrlFeatureVector& max() const { return max_; }

  nlohmann::json to_json() const;
  static FeatureNormalizer from_json(const nlohmann::json& doc);

 private:
  IrlFeatureVector min_;
  IrlFeatureVector max_;
};

}  // namespace drivestyle
