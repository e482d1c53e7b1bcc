#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <json.hpp>

#include "drivestyle/dataset.hpp"
#include "drivestyle/error.hpp"
#include "drivestyle/styles.hpp"

using namespace drivestyle;
using nlohmann::json;

namespace {

AgentState vehicle(double x, double y, double speed, double accel = 0.0) {
  AgentState s;
  s.x = x;
  s.y = y;
  s.speed = speed;
  s.accel = accel;
  return s;
}

AgentTrack constant_track(const std::string& id, double x, double y, double speed, int steps, double dt) {
  AgentTrack t;
  t.agent_id = id;
  for (int k = 0; k < steps; ++k) t.states.push_back(vehicle(x + speed * dt * k, y, speed));
  return t;
}

json minimal_doc() {
  return json::parse(R"({"id":"m","delta_t":0.1,
    "layout":{"lane_count":2,"lane_width":3.5,"length":100.0},
    "tracks":[{"agent_id":"a","start_step":0,"length_m":4.5,"width_m":1.8,
      "states":[{"x":0,"y":1.75,"speed":10,"accel":0,"heading":0},
                {"x":1,"y":1.75,"speed":10,"accel":0,"heading":0}]}]})");
}

Episode random_episode(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Episode ep;
  ep.id = "rand";
  ep.delta_t = 0.05 + 0.1 * u(rng);
  ep.layout = {1 + static_cast<int>(u(rng) * 4), 3.0 + u(rng), 200.0 + 300.0 * u(rng)};
  const int tracks = 1 + static_cast<int>(u(rng) * 5);
  for (int i = 0; i < tracks; ++i) {
    AgentTrack t;
    t.agent_id = "v" + std::to_string(i);
    t.start_step = static_cast<int>(u(rng) * 10);
    t.length_m = 3.5 + 2.0 * u(rng);
    t.width_m = 1.5 + 0.7 * u(rng);
    const int n = 2 + static_cast<int>(u(rng) * 20);
    for (int k = 0; k < n; ++k) {
      AgentState s = vehicle(400.0 * u(rng) - 50.0, 12.0 * u(rng), 40.0 * u(rng), 6.0 * u(rng) - 3.0);
      s.heading = 0.4 * u(rng) - 0.2;
      s.length = t.length_m;
      s.width = t.width_m;
      t.states.push_back(s);
    }
    ep.tracks.push_back(t);
  }
  return ep;
}

}  // namespace

TEST_CASE("minimal episode parses") {
  const Episode ep = episode_from_json(minimal_doc());
  CHECK(ep.id == "m");
  REQUIRE(ep.tracks.size() == 1);
  CHECK(ep.tracks[0].states.size() == 2);
  CHECK(ep.tracks[0].states[1].x == 1.0);
  CHECK(ep.step_count() == 2);
}

TEST_CASE("parse errors name the offending field") {
  json doc = minimal_doc();
  doc["tracks"][0]["states"][1].erase("speed");
  try {
    episode_from_json(doc);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.field() == "tracks[0].states[1].speed");
    CHECK(e.kind() == ErrorKind::kData);
  }

  doc = minimal_doc();
  doc["delta_t"] = 0.0;
  CHECK_THROWS_AS(episode_from_json(doc), ParseError);

  doc = minimal_doc();
  doc["tracks"][0]["states"].erase(1);
  CHECK_THROWS_AS(episode_from_json(doc), ParseError);

  doc = minimal_doc();
  doc["tracks"][0]["states"][0]["speed"] = -1.0;
  CHECK_THROWS_AS(episode_from_json(doc), ParseError);

  doc = minimal_doc();
  doc["tracks"].push_back(doc["tracks"][0]);
  CHECK_THROWS_AS(episode_from_json(doc), ParseError);

  doc = minimal_doc();
  doc["tracks"][0]["states"][0]["x"] = "zero";
  CHECK_THROWS_AS(episode_from_json(doc), ParseError);
}

TEST_CASE("random episodes survive a serialize-parse round trip byte for byte") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const Episode ep = random_episode(rng);
    const std::string text = episode_to_string(ep);
    const Episode back = episode_from_json(json::parse(text));
    CHECK(episode_to_string(back) == text);
    REQUIRE(back.tracks.size() == ep.tracks.size());
    for (std::size_t t = 0; t < ep.tracks.size(); ++t) {
      CHECK(back.tracks[t].states == ep.tracks[t].states);
    }
  }
}

TEST_CASE("episode files round trip through disk") {
  std::mt19937_64 rng(9);
  const Episode ep = random_episode(rng);
  const auto path = std::filesystem::temp_directory_path() / "drivestyle_test_episode.json";
  save_episode(ep, path);
  const Episode back = load_episode(path);
  CHECK(episode_to_string(back) == episode_to_string(ep));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_episode(path), DataError);
}

TEST_CASE("observation of a lone vehicle is all sentinels") {
  Episode ep;
  ep.layout = {3, 3.5, 500.0};
  ep.tracks.push_back(constant_track("ego", 10.0, 1.75, 20.0, 3, 0.1));
  const Observation obs = build_observation(ep, "ego", 0);
  CHECK(obs.values.size() == 34);
  CHECK(obs.at(0) == 20.0);
  CHECK(obs.at(2) == doctest::Approx(1.75));
  CHECK(obs.at(3) == doctest::Approx(1.75));
  for (int slot = 0; slot < kNeighborSlots; ++slot) {
    const int off = Observation::neighbor_offset(static_cast<NeighborSlot>(slot));
    CHECK(obs.at(off) == 0.0);
    CHECK(obs.at(off + 1) == (slot % 2 == 0 ? kSentinelDistance : -kSentinelDistance));
    CHECK(obs.at(off + 2) == 0.0);
    CHECK(obs.at(off + 3) == 0.0);
    CHECK(obs.at(off + 4) == 0.0);
  }
}

TEST_CASE("same-lane lead fills the front slot with relative quantities") {
  std::vector<AgentState> scene{vehicle(0.0, 5.25, 25.0, 0.5), vehicle(30.0, 5.5, 20.0, -1.0)};
  scene[1].heading = 0.02;
  const Observation obs = observe(scene, 0, RoadLayout{3, 3.5, 500.0});
  const int off = Observation::neighbor_offset(NeighborSlot::kSameFront);
  CHECK(obs.at(off) == doctest::Approx(0.02));
  CHECK(obs.at(off + 1) == doctest::Approx(30.0));
  CHECK(obs.at(off + 2) == doctest::Approx(0.25));
  CHECK(obs.at(off + 3) == doctest::Approx(-5.0));
  CHECK(obs.at(off + 4) == doctest::Approx(-1.5));
  for (NeighborSlot s : {NeighborSlot::kSameRear, NeighborSlot::kLeftFront, NeighborSlot::kLeftRear,
                         NeighborSlot::kRightFront, NeighborSlot::kRightRear}) {
    CHECK(std::abs(obs.at(Observation::neighbor_offset(s) + 1)) == kSentinelDistance);
  }
}

TEST_CASE("nearest candidate wins a slot and lanes map to the right slots") {
  const RoadLayout layout{3, 3.5, 500.0};
  std::vector<AgentState> scene{vehicle(100.0, 5.25, 20.0), vehicle(140.0, 5.25, 20.0),
                                vehicle(120.0, 5.25, 20.0), vehicle(90.0, 8.75, 20.0),
                                vehicle(105.0, 1.75, 20.0), vehicle(80.0, 5.25, 20.0)};
  const NeighborSet n = find_neighbors(scene, 0, layout);
  CHECK(n[static_cast<std::size_t>(NeighborSlot::kSameFront)] == 2u);
  CHECK(n[static_cast<std::size_t>(NeighborSlot::kSameRear)] == 5u);
  CHECK(n[static_cast<std::size_t>(NeighborSlot::kLeftRear)] == 3u);
  CHECK(n[static_cast<std::size_t>(NeighborSlot::kRightFront)] == 4u);
  CHECK_FALSE(n[static_cast<std::size_t>(NeighborSlot::kLeftFront)].has_value());
  CHECK_FALSE(n[static_cast<std::size_t>(NeighborSlot::kRightRear)].has_value());
}

TEST_CASE("observation of a dead agent is an error") {
  Episode ep;
  ep.tracks.push_back(constant_track("a", 0.0, 1.75, 10.0, 2, 0.1));
  CHECK_THROWS_AS(build_observation(ep, "a", 5), DataError);
  CHECK_THROWS_AS(build_observation(ep, "missing", 0), DataError);
}

TEST_CASE("observation is a pure function of the episode") {
  std::mt19937_64 rng(21);
  const Episode ep = random_episode(rng);
  const auto& t = ep.tracks.front();
  const Observation a = build_observation(ep, t.agent_id, t.start_step);
  const Observation b = build_observation(ep, t.agent_id, t.start_step);
  CHECK(a.values == b.values);
}

TEST_CASE("time headway to the lead") {
  const RoadLayout layout{3, 3.5, 500.0};
  std::vector<AgentState> scene{vehicle(0.0, 5.25, 25.0), vehicle(50.0, 5.25, 25.0)};
  IrlFeatureVector f = irl_features(scene, 0, nullptr, layout, 0.1);
  CHECK(f[kThwFront] == doctest::Approx(2.0));
  CHECK(f[kThwRear] == kThwCap);
  const RiskMetrics m = compute_risk_metrics(lead_gap(scene, 0, layout), scene[0].speed);
  CHECK(f[kThwFront] == doctest::Approx(m.thw));

  std::vector<AgentState> slow{vehicle(0.0, 5.25, 0.05), vehicle(50.0, 5.25, 25.0)};
  f = irl_features(slow, 0, nullptr, layout, 0.1);
  CHECK(f[kThwFront] == kThwCap);
}

TEST_CASE("lane availability flags") {
  const RoadLayout layout{3, 3.5, 500.0};
  std::vector<AgentState> left_lane{vehicle(0.0, 8.75, 20.0)};
  IrlFeatureVector f = irl_features(left_lane, 0, nullptr, layout, 0.1);
  CHECK(f[kAvailLeft] == 0.0);
  CHECK(f[kAvailRight] == 1.0);

  std::vector<AgentState> blocked{vehicle(0.0, 5.25, 20.0), vehicle(6.0, 8.75, 20.0), vehicle(6.6, 1.75, 20.0)};
  f = irl_features(blocked, 0, nullptr, layout, 0.1);
  CHECK(f[kAvailLeft] == 0.0);
  CHECK(f[kAvailRight] == 1.0);
}

TEST_CASE("centered straight driving has no lateral offset or rate") {
  Episode ep;
  ep.layout = {3, 3.5, 500.0};
  ep.tracks.push_back(constant_track("a", 0.0, 1.75, 20.0, 5, 0.1));
  const IrlFeatureVector f = extract_irl_features(ep, "a", 3);
  CHECK(f[kDCenterline] == 0.0);
  CHECK(f[kDCenterlineRate] == 0.0);
  CHECK(f[kVEgo] == 20.0);
}

TEST_CASE("rates use backward differences and vanish on the first step") {
  Episode ep;
  ep.delta_t = 0.1;
  ep.layout = {3, 3.5, 500.0};
  AgentTrack t;
  t.agent_id = "a";
  t.states = {vehicle(0.0, 1.75, 20.0, 1.0), vehicle(2.0, 1.95, 20.0, 1.5)};
  ep.tracks.push_back(t);
  IrlFeatureVector f = extract_irl_features(ep, "a", 0);
  CHECK(f[kJLong] == 0.0);
  CHECK(f[kDCenterlineRate] == 0.0);
  f = extract_irl_features(ep, "a", 1);
  CHECK(f[kJLong] == doctest::Approx(5.0));
  CHECK(f[kDCenterline] == doctest::Approx(0.2));
  CHECK(f[kDCenterlineRate] == doctest::Approx(2.0));
}

TEST_CASE("normalizer maps to the unit interval") {
  std::vector<IrlFeatureVector> corpus(3);
  for (std::size_t i = 0; i < 3; ++i) {
    corpus[i].fill(4.0);
    corpus[i][0] = 5.0 * static_cast<double>(i);
  }
  const FeatureNormalizer n = FeatureNormalizer::fit(corpus);
  IrlFeatureVector x{};
  x.fill(4.0);
  x[0] = 5.0;
  IrlFeatureVector y = n.apply(x);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == 0.0);
  x[0] = 12.0;
  CHECK(n.apply(x)[0] == 1.0);
  x[0] = -3.0;
  CHECK(n.apply(x)[0] == 0.0);

  CHECK_THROWS_AS(FeatureNormalizer::fit(std::vector<IrlFeatureVector>{}), DataError);
  const FeatureNormalizer back = FeatureNormalizer::from_json(n.to_json());
  CHECK(back.min() == n.min());
  CHECK(back.max() == n.max());
  CHECK(n.to_json().contains("thw_front"));
}

TEST_CASE("normalized features stay in the unit interval on random data") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 10.0);
  std::vector<IrlFeatureVector> corpus(200);
  for (auto& f : corpus)
    for (auto& v : f) v = g(rng);
  const FeatureNormalizer n = FeatureNormalizer::fit(corpus);
  for (int i = 0; i < 500; ++i) {
    IrlFeatureVector x;
    for (auto& v : x) v = 3.0 * g(rng);
    for (double v : n.apply(x)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}
