#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drivestyle/dataset.hpp"
#include "drivestyle/geometry.hpp"

namespace drivestyle {

/// Boundary conditions of one Frenet maneuver. The longitudinal end fixes
/// velocity and acceleration only (velocity keeping).
struct BoundarySpec {
  double horizon = 5.0;
  double s0 = 0.0, s_dot0 = 0.0, s_ddot0 = 0.0;
  double s_dot_end = 0.0, s_ddot_end = 0.0;
  double d0 = 0.0, d_dot0 = 0.0, d_ddot0 = 0.0;
  double d_end = 0.0, d_dot_end = 0.0, d_ddot_end = 0.0;
};

using QuarticCoefficients = std::array<double, 5>;  // b0..b4
using QuinticCoefficients = std::array<double, 6>;  // a0..a5

/// Throws NumericError unless horizon > 0.
QuinticCoefficients solve_lateral_quintic(const BoundarySpec& spec);
QuarticCoefficients solve_longitudinal_quartic(const BoundarySpec& spec);

/// Value and first two derivatives of a polynomial at t.
template <std::size_t N>
std::array<double, 3> evaluate_polynomial(const std::array<double, N>& c, double t) {
  double p = 0.0, dp = 0.0, ddp = 0.0;
  for (std::size_t i = N; i-- > 0;) {
    ddp = ddp * t + 2.0 * dp;
    dp = dp * t + p;
    p = p * t + c[i];
  }
  return {p, dp, ddp};
}

/// Dense solve with partial pivoting for the small boundary systems.
/// `a` is row-major n x n. Throws NumericError if singular.
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b);

struct PolynomialTrajectory {
  QuarticCoefficients longitudinal{};
  QuinticCoefficients lateral{};
  double horizon = 0.0;
  double sample_dt = 0.1;
  int reference_lane = 0;
  int target_lane = 0;
  double target_speed = 0.0;
  /// Cartesian samples at t = 0, dt, ..., horizon.
  std::vector<AgentState> samples;
  bool leaves_road = false;
};

struct CandidateGrid {
  std::vector<int> lane_offsets = {-1, 0, 1};
  std::vector<double> speed_factors = {0.8, 1.0, 1.2};
  std::vector<double> horizons = {4.0, 6.0};
  double min_speed = 0.0;
  double max_speed = 45.0;
  /// 0 keeps the whole grid; otherwise a seeded subset of this size.
  int max_candidates = 0;
};

/// Candidate maneuvers sharing `initial`'s Frenet state. Lane offsets that
/// leave the road are skipped. Throws UsageError for an empty grid.
std::vector<PolynomialTrajectory> sample_candidates(const AgentState& initial, const RoadLayout& layout,
                                                    const CandidateGrid& grid, double sample_dt,
                                                    std::uint64_t seed);

/// Surrounding traffic of one demonstration window: the other agents of the
/// episode replayed from `start_step`.
struct ReplayContext {
  const Episode* episode = nullptr;
  std::size_t ego_track = 0;
  int start_step = 0;
  int steps = 0;  // window length in samples
};

/// Ego states over the window: polynomial samples, held at the terminal
/// state past the horizon.
std::vector<AgentState> candidate_window(const PolynomialTrajectory& candidate, int steps, double dt);

struct AccumulatedFeatures {
  IrlFeatureVector sum{};
  bool leaves_road = false;
};

/// Sum of normalized per-step features of `ego_states` against replayed
/// traffic. The first step has zero rates.
AccumulatedFeatures accumulate_features(std::span<const AgentState> ego_states, const ReplayContext& context,
                                        const FeatureNormalizer& normalizer);
AccumulatedFeatures candidate_features(const PolynomialTrajectory& candidate, const ReplayContext& context,
                                       const FeatureNormalizer& normalizer);

}  // namespace drivestyle
