#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include <Eigen/Dense>

#include "drivestyle/error.hpp"
#include "drivestyle/planner.hpp"

using namespace drivestyle;

namespace {

// Boundary system of the lateral quintic, solved with Eigen's full-pivot LU.
QuinticCoefficients eigen_quintic(const BoundarySpec& s) {
  const double T = s.horizon;
  Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> b;
  for (int i = 0; i < 6; ++i) {
    A(0, i) = i == 0 ? 1.0 : 0.0;
    A(1, i) = i == 1 ? 1.0 : 0.0;
    A(2, i) = i == 2 ? 2.0 : 0.0;
    A(3, i) = std::pow(T, i);
    A(4, i) = i >= 1 ? i * std::pow(T, i - 1) : 0.0;
    A(5, i) = i >= 2 ? i * (i - 1) * std::pow(T, i - 2) : 0.0;
  }
  b << s.d0, s.d_dot0, s.d_ddot0, s.d_end, s.d_dot_end, s.d_ddot_end;
  const Eigen::Matrix<double, 6, 1> x = A.fullPivLu().solve(b);
  QuinticCoefficients c;
  for (int i = 0; i < 6; ++i) c[static_cast<std::size_t>(i)] = x(i);
  return c;
}

BoundarySpec random_spec(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BoundarySpec s;
  s.horizon = 1.0 + 7.0 * (u(rng) + 1.0) / 2.0;
  s.s0 = 100.0 * u(rng);
  s.s_dot0 = 20.0 + 10.0 * u(rng);
  s.s_ddot0 = 2.0 * u(rng);
  s.s_dot_end = 20.0 + 10.0 * u(rng);
  s.s_ddot_end = u(rng);
  s.d0 = 2.0 * u(rng);
  s.d_dot0 = u(rng);
  s.d_ddot0 = u(rng);
  s.d_end = 4.0 * u(rng);
  s.d_dot_end = 0.5 * u(rng);
  s.d_ddot_end = 0.5 * u(rng);
  return s;
}

Episode lone_episode(const AgentState& ego, int steps) {
  Episode ep;
  ep.delta_t = 0.1;
  ep.layout = {3, 3.5, 1000.0};
  AgentTrack t;
  t.agent_id = "ego";
  for (int k = 0; k < steps; ++k) {
    AgentState s = ego;
    s.x += ego.speed * 0.1 * k;
    t.states.push_back(s);
  }
  ep.tracks.push_back(t);
  return ep;
}

FeatureNormalizer wide_normalizer() {
  IrlFeatureVector lo{}, hi{};
  hi.fill(100.0);
  return FeatureNormalizer(lo, hi);
}

}  // namespace

TEST_CASE("zero boundaries give the zero quintic") {
  const BoundarySpec s;
  for (double c : solve_lateral_quintic(s)) CHECK(c == doctest::Approx(0.0));
}

TEST_CASE("rest-to-rest lane change quintic") {
  BoundarySpec s;
  s.horizon = 5.0;
  s.d_end = 3.5;
  const auto a = solve_lateral_quintic(s);
  const auto ref = eigen_quintic(s);
  CHECK(a[0] == doctest::Approx(0.0));
  CHECK(a[1] == doctest::Approx(0.0));
  CHECK(a[2] == doctest::Approx(0.0));
  CHECK(a[3] == doctest::Approx(0.28).epsilon(1e-12));
  CHECK(a[4] == doctest::Approx(-0.084).epsilon(1e-12));
  CHECK(a[5] == doctest::Approx(0.00672).epsilon(1e-12));
  for (std::size_t i = 0; i < 6; ++i) CHECK(a[i] == doctest::Approx(ref[i]).scale(1.0).epsilon(1e-12));
  double prev = -1.0;
  for (int k = 0; k <= 500; ++k) {
    const double y = evaluate_polynomial(a, 5.0 * k / 500.0)[0];
    CHECK(y >= prev);
    CHECK(y <= 3.5 + 1e-12);
    prev = y;
  }
}

TEST_CASE("boundary residuals vanish on random specs") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const BoundarySpec s = random_spec(rng);
    const auto a = solve_lateral_quintic(s);
    const auto y0 = evaluate_polynomial(a, 0.0);
    const auto yT = evaluate_polynomial(a, s.horizon);
    CHECK(std::abs(y0[0] - s.d0) < 1e-9);
    CHECK(std::abs(y0[1] - s.d_dot0) < 1e-9);
    CHECK(std::abs(y0[2] - s.d_ddot0) < 1e-9);
    CHECK(std::abs(yT[0] - s.d_end) < 1e-9);
    CHECK(std::abs(yT[1] - s.d_dot_end) < 1e-9);
    CHECK(std::abs(yT[2] - s.d_ddot_end) < 1e-9);
    const auto ref = eigen_quintic(s);
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(a[j] - ref[j]) < 1e-9);

    const auto b = solve_longitudinal_quartic(s);
    const auto x0 = evaluate_polynomial(b, 0.0);
    const auto xT = evaluate_polynomial(b, s.horizon);
    CHECK(std::abs(x0[0] - s.s0) < 1e-9);
    CHECK(std::abs(x0[1] - s.s_dot0) < 1e-9);
    CHECK(std::abs(x0[2] - s.s_ddot0) < 1e-9);
    CHECK(std::abs(xT[1] - s.s_dot_end) < 1e-9);
    CHECK(std::abs(xT[2] - s.s_ddot_end) < 1e-9);
  }
}

TEST_CASE("constant speed and braking quartics") {
  BoundarySpec s;
  s.horizon = 5.0;
  s.s_dot0 = 20.0;
  s.s_dot_end = 20.0;
  const auto b = solve_longitudinal_quartic(s);
  CHECK(b[0] == doctest::Approx(0.0));
  CHECK(b[1] == doctest::Approx(20.0));
  CHECK(std::abs(b[2]) < 1e-12);
  CHECK(std::abs(b[3]) < 1e-12);
  CHECK(std::abs(b[4]) < 1e-12);

  s.horizon = 4.0;
  s.s_dot_end = 10.0;
  const auto c = solve_longitudinal_quartic(s);
  const auto end = evaluate_polynomial(c, 4.0);
  CHECK(std::abs(end[1] - 10.0) < 1e-9);
  CHECK(std::abs(end[2]) < 1e-9);
}

TEST_CASE("nonpositive horizons and singular systems are numeric errors") {
  BoundarySpec s;
  s.horizon = 0.0;
  CHECK_THROWS_AS(solve_lateral_quintic(s), NumericError);
  CHECK_THROWS_AS(solve_longitudinal_quartic(s), NumericError);
  s.horizon = -1.0;
  CHECK_THROWS_AS(solve_lateral_quintic(s), NumericError);
  CHECK_THROWS_AS(solve_dense({1.0, 2.0, 2.0, 4.0}, {1.0, 2.0}), NumericError);
  const auto x = solve_dense({0.0, 1.0, 1.0, 0.0}, {3.0, 4.0});
  CHECK(x[0] == doctest::Approx(4.0));
  CHECK(x[1] == doctest::Approx(3.0));
}

TEST_CASE("single-cell grid gives one constant-velocity candidate") {
  AgentState ego;
  ego.x = 10.0;
  ego.y = 5.25;
  ego.speed = 20.0;
  CandidateGrid grid;
  grid.lane_offsets = {0};
  grid.speed_factors = {1.0};
  grid.horizons = {5.0};
  const auto c = sample_candidates(ego, RoadLayout{3, 3.5, 500.0}, grid, 0.1, 0);
  REQUIRE(c.size() == 1);
  REQUIRE(c[0].samples.size() == 51);
  for (std::size_t k = 0; k < c[0].samples.size(); ++k) {
    const AgentState& s = c[0].samples[k];
    CHECK(s.x == doctest::Approx(10.0 + 2.0 * static_cast<double>(k)));
    CHECK(s.y == doctest::Approx(5.25));
    CHECK(s.speed == doctest::Approx(20.0));
  }
}

TEST_CASE("full grid from the middle lane has eighteen candidates starting at the demonstration") {
  AgentState ego;
  ego.x = 50.0;
  ego.y = 5.0;
  ego.speed = 25.0;
  ego.heading = 0.02;
  const RoadLayout layout{3, 3.5, 500.0};
  const auto c = sample_candidates(ego, layout, CandidateGrid{}, 0.1, 1);
  REQUIRE(c.size() == 18);
  std::set<std::tuple<int, double, double>> keys;
  for (const auto& t : c) {
    const AgentState& s0 = t.samples.front();
    CHECK(std::abs(s0.x - ego.x) < 1e-9);
    CHECK(std::abs(s0.y - ego.y) < 1e-9);
    CHECK(std::abs(s0.speed - ego.speed) < 1e-9);
    CHECK(std::abs(s0.heading - ego.heading) < 1e-9);
    keys.insert({t.target_lane, t.target_speed, t.horizon});
  }
  CHECK(keys.size() == 18);

  ego.y = 1.75;
  CHECK(sample_candidates(ego, layout, CandidateGrid{}, 0.1, 1).size() == 12);
}

TEST_CASE("candidate sampling is deterministic under a seed") {
  AgentState ego;
  ego.y = 5.25;
  ego.speed = 22.0;
  CandidateGrid grid;
  grid.max_candidates = 7;
  const RoadLayout layout{3, 3.5, 500.0};
  const auto a = sample_candidates(ego, layout, grid, 0.1, 99);
  const auto b = sample_candidates(ego, layout, grid, 0.1, 99);
  REQUIRE(a.size() == 7);
  REQUIRE(b.size() == 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].lateral == b[i].lateral);
    CHECK(a[i].longitudinal == b[i].longitudinal);
  }
  CandidateGrid empty;
  empty.horizons.clear();
  CHECK_THROWS_AS(sample_candidates(ego, layout, empty, 0.1, 0), UsageError);
}

TEST_CASE("accumulated features of simple candidates") {
  AgentState ego;
  ego.x = 0.0;
  ego.y = 5.25;
  ego.speed = 20.0;
  const Episode ep = lone_episode(ego, 60);
  const FeatureNormalizer norm = wide_normalizer();
  CandidateGrid grid;
  grid.speed_factors = {1.0};
  grid.horizons = {5.0};
  const auto c = sample_candidates(ego, ep.layout, grid, ep.delta_t, 0);
  REQUIRE(c.size() == 3);

  ReplayContext empty{&ep, 0, 0, 0};
  const auto zero = candidate_features(c[1], empty, norm);
  for (double v : zero.sum) CHECK(v == 0.0);

  ReplayContext ctx{&ep, 0, 0, 40};
  const auto keep = candidate_features(c[1], ctx, norm);
  CHECK(c[1].target_lane == 1);
  CHECK(keep.sum[kVEgo] == doctest::Approx(40 * 0.2));
  CHECK(keep.sum[kALat] == doctest::Approx(0.0));
  CHECK_FALSE(keep.leaves_road);
  const auto change = candidate_features(c[2], ctx, norm);
  CHECK(change.sum[kALat] > keep.sum[kALat] + 1e-6);
}

TEST_CASE("candidates leaving the road are flagged") {
  AgentState ego;
  ego.y = 1.0;
  ego.speed = 20.0;
  ego.heading = -0.2;
  CandidateGrid grid;
  grid.lane_offsets = {0};
  grid.speed_factors = {1.0};
  grid.horizons = {4.0};
  const auto c = sample_candidates(ego, RoadLayout{3, 3.5, 500.0}, grid, 0.1, 0);
  CHECK(c[0].leaves_road);
}
