#include "drivestyle/geometry.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace drivestyle {

namespace {

void check_lane(const RoadLayout& layout, int lane) {
  if (!layout.has_lane(lane)) {
    throw std::out_of_range("reference lane " + std::to_string(lane) + " outside [0, " +
                            std::to_string(layout.lane_count) + ")");
  }
}

}  // namespace

int RoadLayout::lane_of(double y) const {
  const int lane = static_cast<int>(std::floor(y / lane_width));
  return std::clamp(lane, 0, lane_count - 1);
}

FrenetPose to_frenet(const AgentState& state, const RoadLayout& layout, int reference_lane) {
  check_lane(layout, reference_lane);
  const double c = std::cos(state.heading);
  const double s = std::sin(state.heading);
  FrenetPose pose;
  pose.s = state.x;
  pose.d = state.y - layout.lane_center(reference_lane);
  pose.s_dot = state.speed * c;
  pose.d_dot = state.speed * s;
  pose.s_ddot = state.accel * c;
  pose.d_ddot = state.accel * s;
  return pose;
}

Point2 from_frenet(const FrenetPose& pose, const RoadLayout& layout, int reference_lane) {
  check_lane(layout, reference_lane);
  return {pose.s, pose.d + layout.lane_center(reference_lane)};
}

LaneMarkingDistances lane_marking_distances(const AgentState& state, const RoadLayout& layout) {
  const int lane = layout.lane_of(state.y);
  return {(lane + 1) * layout.lane_width - state.y, state.y - lane * layout.lane_width};
}

std::array<Point2, 4> footprint_corners(const AgentState& state) {
  const double c = std::cos(state.heading);
  const double s = std::sin(state.heading);
  const double hl = 0.5 * state.length;
  const double hw = 0.5 * state.width;
  auto corner = [&](double lon, double lat) {
    return Point2{state.x + lon * c - lat * s, state.y + lon * s + lat * c};
  };
  return {corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)};
}

bool footprint_off_road(const AgentState& state, const RoadLayout& layout) {
  for (const auto& c : footprint_corners(state)) {
    if (c.y < 0.0 || c.y > layout.road_width()) return true;
  }
  return false;
}

}  // namespace drivestyle
