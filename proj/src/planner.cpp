#include "drivestyle/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "drivestyle/error.hpp"

namespace drivestyle {

std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  if (a.size() != n * n) throw NumericError("solve_dense: matrix is not n x n");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    }
    if (std::abs(a[pivot * n + col]) < 1e-300) throw NumericError("solve_dense: singular system");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = a[r * n + col] / a[col * n + col];
      if (factor == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= factor * a[col * n + c];
      b[r] -= factor * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i * n + c] * x[c];
    x[i] = acc / a[i * n + i];
  }
  return x;
}

namespace {

void check_horizon(double horizon) {
  if (!(horizon > 0.0)) throw NumericError("boundary horizon must be positive");
}

// Row of d^order/dt^order [1, t, t^2, ...] with `n` terms.
std::vector<double> basis_row(std::size_t n, double t, int order) {
  std::vector<double> row(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int power = static_cast<int>(i) - order;
    if (power < 0) continue;
    double coeff = 1.0;
    for (int k = 0; k < order; ++k) coeff *= static_cast<double>(static_cast<int>(i) - k);
    row[i] = coeff * std::pow(t, power);
  }
  return row;
}

}  // namespace

QuinticCoefficients solve_lateral_quintic(const BoundarySpec& spec) {
  check_horizon(spec.horizon);
  constexpr std::size_t n = 6;
  std::vector<double> a;
  a.reserve(n * n);
  for (double t : {0.0, spec.horizon}) {
    for (int order = 0; order < 3; ++order) {
      const auto row = basis_row(n, t, order);
      a.insert(a.end(), row.begin(), row.end());
    }
  }
  const std::vector<double> b = {spec.d0, spec.d_dot0, spec.d_ddot0, spec.d_end, spec.d_dot_end, spec.d_ddot_end};
  const auto x = solve_dense(std::move(a), b);
  QuinticCoefficients c{};
  std::copy(x.begin(), x.end(), c.begin());
  return c;
}

QuarticCoefficients solve_longitudinal_quartic(const BoundarySpec& spec) {
  check_horizon(spec.horizon);
  constexpr std::size_t n = 5;
  std::vector<double> a;
  a.reserve(n * n);
  for (int order = 0; order < 3; ++order) {
    const auto row = basis_row(n, 0.0, order);
    a.insert(a.end(), row.begin(), row.end());
  }
  for (int order = 1; order < 3; ++order) {
    const auto row = basis_row(n, spec.horizon, order);
    a.insert(a.end(), row.begin(), row.end());
  }
  const std::vector<double> b = {spec.s0, spec.s_dot0, spec.s_ddot0, spec.s_dot_end, spec.s_ddot_end};
  const auto x = solve_dense(std::move(a), b);
  QuarticCoefficients c{};
  std::copy(x.begin(), x.end(), c.begin());
  return c;
}

namespace {

PolynomialTrajectory build_candidate(const FrenetPose& start, const AgentState& initial, const RoadLayout& layout,
                                     int reference_lane, int target_lane, double target_speed, double horizon,
                                     double sample_dt) {
  BoundarySpec spec;
  spec.horizon = horizon;
  spec.s0 = start.s;
  spec.s_dot0 = start.s_dot;
  spec.s_ddot0 = start.s_ddot;
  spec.s_dot_end = target_speed;
  spec.s_ddot_end = 0.0;
  spec.d0 = start.d;
  spec.d_dot0 = start.d_dot;
  spec.d_ddot0 = start.d_ddot;
  spec.d_end = layout.lane_center(target_lane) - layout.lane_center(reference_lane);

  PolynomialTrajectory traj;
  traj.longitudinal = solve_longitudinal_quartic(spec);
  traj.lateral = solve_lateral_quintic(spec);
  traj.horizon = horizon;
  traj.sample_dt = sample_dt;
  traj.reference_lane = reference_lane;
  traj.target_lane = target_lane;
  traj.target_speed = target_speed;

  const int n = static_cast<int>(std::llround(horizon / sample_dt));
  traj.samples.reserve(static_cast<std::size_t>(n + 1));
  for (int k = 0; k <= n; ++k) {
    const double t = k * sample_dt;
    const auto lon = evaluate_polynomial(traj.longitudinal, t);
    const auto lat = evaluate_polynomial(traj.lateral, t);
    AgentState s = initial;
    s.x = lon[0];
    s.y = lat[0] + layout.lane_center(reference_lane);
    s.speed = std::hypot(lon[1], lat[1]);
    if (s.speed > 1e-9) {
      s.heading = std::atan2(lat[1], lon[1]);
      s.accel = (lon[1] * lon[2] + lat[1] * lat[2]) / s.speed;
    } else {
      s.heading = k == 0 ? initial.heading : traj.samples.back().heading;
      s.accel = lon[2];
    }
    if (k == 0) {
      // Bit-exact start at the demonstration state.
      s.speed = initial.speed;
      s.heading = initial.heading;
      s.accel = initial.accel;
    }
    traj.leaves_road = traj.leaves_road || footprint_off_road(s, layout);
    traj.samples.push_back(s);
  }
  return traj;
}

}  // namespace

std::vector<PolynomialTrajectory> sample_candidates(const AgentState& initial, const RoadLayout& layout,
                                                    const CandidateGrid& grid, double sample_dt,
                                                    std::uint64_t seed) {
  if (grid.lane_offsets.empty() || grid.speed_factors.empty() || grid.horizons.empty()) {
    throw UsageError("candidate grid is empty");
  }
  if (!(sample_dt > 0.0)) throw UsageError("sample_dt must be positive");
  const int reference_lane = layout.lane_of(initial.y);
  const FrenetPose start = to_frenet(initial, layout, reference_lane);

  std::vector<PolynomialTrajectory> out;
  for (int offset : grid.lane_offsets) {
    const int target = reference_lane + offset;
    if (!layout.has_lane(target)) continue;
    for (double factor : grid.speed_factors) {
      const double speed = std::clamp(factor * start.s_dot, grid.min_speed, grid.max_speed);
      for (double horizon : grid.horizons) {
        out.push_back(build_candidate(start, initial, layout, reference_lane, target, speed, horizon, sample_dt));
      }
    }
  }
  if (out.empty()) throw UsageError("candidate grid produced no reachable lane");
  if (grid.max_candidates > 0 && static_cast<std::size_t>(grid.max_candidates) < out.size()) {
    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(grid.max_candidates));
    std::sort(order.begin(), order.end());
    std::vector<PolynomialTrajectory> subset;
    subset.reserve(order.size());
    for (std::size_t i : order) subset.push_back(std::move(out[i]));
    out = std::move(subset);
  }
  return out;
}

std::vector<AgentState> candidate_window(const PolynomialTrajectory& candidate, int steps, double dt) {
  std::vector<AgentState> out;
  out.reserve(static_cast<std::size_t>(std::max(steps, 0)));
  for (int k = 0; k < steps; ++k) {
    if (static_cast<std::size_t>(k) < candidate.samples.size()) {
      out.push_back(candidate.samples[static_cast<std::size_t>(k)]);
      continue;
    }
    AgentState s = out.back();
    s.x += s.speed * std::cos(s.heading) * dt;
    s.y += s.speed * std::sin(s.heading) * dt;
    s.accel = 0.0;
    out.push_back(s);
  }
  return out;
}

AccumulatedFeatures accumulate_features(std::span<const AgentState> ego_states, const ReplayContext& context,
                                        const FeatureNormalizer& normalizer) {
  AccumulatedFeatures acc;
  const Episode& ep = *context.episode;
  std::vector<AgentState> scene;
  for (std::size_t k = 0; k < ego_states.size(); ++k) {
    const int step = context.start_step + static_cast<int>(k);
    scene.clear();
    for (std::size_t i = 0; i < ep.tracks.size(); ++i) {
      if (i != context.ego_track && ep.tracks[i].alive_at(step)) scene.push_back(ep.tracks[i].at(step));
    }
    scene.push_back(ego_states[k]);
    const AgentState* previous = k > 0 ? &ego_states[k - 1] : nullptr;
    const auto raw = irl_features(scene, scene.size() - 1, previous, ep.layout, ep.delta_t);
    const auto norm = normalizer.apply(raw);
    for (std::size_t f = 0; f < norm.size(); ++f) acc.sum[f] += norm[f];
    acc.leaves_road = acc.leaves_road || footprint_off_road(ego_states[k], ep.layout);
  }
  return acc;
}

AccumulatedFeatures candidate_features(const PolynomialTrajectory& candidate, const ReplayContext& context,
                                       const FeatureNormalizer& normalizer) {
  const auto window = candidate_window(candidate, context.steps, context.episode->delta_t);
  return accumulate_features(window, context, normalizer);
}

}  // namespace drivestyle
