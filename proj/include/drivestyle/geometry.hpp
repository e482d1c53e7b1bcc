#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace drivestyle {

/// Kinematic state of one vehicle. x runs along the road axis, y = 0 is the
/// right road edge and grows to the left.
struct AgentState {
  double x = 0.0;               // m
  double y = 0.0;               // m
  double speed = 0.0;           // m/s, >= 0
  double accel = 0.0;           // m/s^2, longitudinal
  double heading = 0.0;         // rad, 0 = road axis, in (-pi, pi]
  double steering_angle = 0.0;  // rad
  double length = 4.5;          // m
  double width = 1.8;           // m

  bool operator==(const AgentState&) const = default;
};

/// Straight multi-lane segment. Lanes are numbered from the right edge.
struct RoadLayout {
  int lane_count = 3;
  double lane_width = 3.5;
  double length = 500.0;

  double road_width() const { return lane_count * lane_width; }
  double lane_center(int lane) const { return (lane + 0.5) * lane_width; }
  /// Lane containing lateral position `y`, clamped to the existing lanes.
  int lane_of(double y) const;
  bool has_lane(int lane) const { return lane >= 0 && lane < lane_count; }

  bool operator==(const RoadLayout&) const = default;
};

/// Road-aligned pose relative to one reference lane centerline.
struct FrenetPose {
  double s = 0.0;
  double d = 0.0;
  double s_dot = 0.0;
  double d_dot = 0.0;
  double s_ddot = 0.0;
  double d_ddot = 0.0;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct LaneMarkingDistances {
  double left = 0.0;   // negative once the left road edge is crossed
  double right = 0.0;  // negative once the right road edge is crossed
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle + std::numbers::pi, kTwoPi);
  if (wrapped < 0.0) wrapped += kTwoPi;
  wrapped -= std::numbers::pi;
  // fmod maps +pi onto -pi; keep the upper end of the half-open interval.
  if (wrapped <= -std::numbers::pi) wrapped = std::numbers::pi;
  return wrapped;
}

/// Throws std::out_of_range for an invalid reference lane.
FrenetPose to_frenet(const AgentState& state, const RoadLayout& layout, int reference_lane);
Point2 from_frenet(const FrenetPose& pose, const RoadLayout& layout, int reference_lane);

LaneMarkingDistances lane_marking_distances(const AgentState& state, const RoadLayout& layout);

/// Corners of the oriented footprint rectangle, counter-clockwise from the
/// front-left corner.
std::array<Point2, 4> footprint_corners(const AgentState& state);

/// True when any footprint corner lies outside the outer road edges.
bool footprint_off_road(const AgentState& state, const RoadLayout& layout);

}  // namespace drivestyle
