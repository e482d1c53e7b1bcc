#include "drivestyle/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "drivestyle/error.hpp"

namespace drivestyle {

using nlohmann::json;

const std::array<std::string_view, kIrlFeatureCount> kIrlFeatureNames = {
    "v_ego", "a_long", "a_lat", "j_long", "thw_front",
    "thw_rear", "d_centerline", "d_centerline_rate", "avail_left", "avail_right"};

// ---------------------------------------------------------------------------
// Episode container

const AgentTrack& Episode::track(std::string_view agent_id) const {
  if (auto idx = track_index(agent_id)) return tracks[*idx];
  throw DataError("episode '" + id + "' has no agent '" + std::string(agent_id) + "'");
}

std::optional<std::size_t> Episode::track_index(std::string_view agent_id) const {
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (tracks[i].agent_id == agent_id) return i;
  }
  return std::nullopt;
}

int Episode::step_count() const {
  int steps = 0;
  for (const auto& t : tracks) steps = std::max(steps, t.end_step());
  return steps;
}

// ---------------------------------------------------------------------------
// JSON schema

namespace {

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + "." + key, "missing field");
  return *it;
}

double require_number(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number()) throw ParseError(path + "." + key, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ParseError(path + "." + key, "not finite");
  return x;
}

int require_int(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number_integer()) throw ParseError(path + "." + key, "expected an integer");
  return v.get<int>();
}

std::string require_string(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw ParseError(path + "." + key, "expected a string");
  return v.get<std::string>();
}

}  // namespace

Episode episode_from_json(const json& doc) {
  const std::string root = "episode";
  Episode ep;
  ep.id = require_string(doc, "id", root);
  ep.delta_t = require_number(doc, "delta_t", root);
  if (ep.delta_t <= 0.0) throw ParseError("episode.delta_t", "must be positive");

  const json& layout = require(doc, "layout", root);
  ep.layout.lane_count = require_int(layout, "lane_count", "layout");
  ep.layout.lane_width = require_number(layout, "lane_width", "layout");
  ep.layout.length = require_number(layout, "length", "layout");
  if (ep.layout.lane_count < 1) throw ParseError("layout.lane_count", "must be >= 1");
  if (ep.layout.lane_width <= 0.0) throw ParseError("layout.lane_width", "must be positive");
  if (ep.layout.length <= 0.0) throw ParseError("layout.length", "must be positive");

  const json& tracks = require(doc, "tracks", root);
  if (!tracks.is_array()) throw ParseError("tracks", "expected an array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const std::string tp = "tracks[" + std::to_string(i) + "]";
    const json& t = tracks[i];
    AgentTrack track;
    track.agent_id = require_string(t, "agent_id", tp);
    if (!seen.insert(track.agent_id).second) throw ParseError(tp + ".agent_id", "duplicate agent id");
    track.start_step = require_int(t, "start_step", tp);
    if (track.start_step < 0) throw ParseError(tp + ".start_step", "must be >= 0");
    track.length_m = require_number(t, "length_m", tp);
    track.width_m = require_number(t, "width_m", tp);
    if (track.length_m <= 0.0) throw ParseError(tp + ".length_m", "must be positive");
    if (track.width_m <= 0.0) throw ParseError(tp + ".width_m", "must be positive");

    const json& states = require(t, "states", tp);
    if (!states.is_array()) throw ParseError(tp + ".states", "expected an array");
    if (states.size() < 2) throw ParseError(tp + ".states", "a track needs at least 2 states");
    track.states.reserve(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
      const std::string sp = tp + ".states[" + std::to_string(k) + "]";
      AgentState s;
      s.x = require_number(states[k], "x", sp);
      s.y = require_number(states[k], "y", sp);
      s.speed = require_number(states[k], "speed", sp);
      s.accel = require_number(states[k], "accel", sp);
      s.heading = require_number(states[k], "heading", sp);
      if (s.speed < 0.0) throw ParseError(sp + ".speed", "must be >= 0");
      if (s.heading <= -std::numbers::pi || s.heading > std::numbers::pi) {
        throw ParseError(sp + ".heading", "must lie in (-pi, pi]");
      }
      s.length = track.length_m;
      s.width = track.width_m;
      track.states.push_back(s);
    }
    ep.tracks.push_back(std::move(track));
  }
  return ep;
}

json episode_to_json(const Episode& episode) {
  json doc;
  doc["id"] = episode.id;
  doc["delta_t"] = episode.delta_t;
  doc["layout"] = {{"lane_count", episode.layout.lane_count},
                   {"lane_width", episode.layout.lane_width},
                   {"length", episode.layout.length}};
  json tracks = json::array();
  for (const auto& t : episode.tracks) {
    json states = json::array();
    for (const auto& s : t.states) {
      states.push_back({{"x", s.x}, {"y", s.y}, {"speed", s.speed}, {"accel", s.accel}, {"heading", s.heading}});
    }
    tracks.push_back({{"agent_id", t.agent_id},
                      {"start_step", t.start_step},
                      {"length_m", t.length_m},
                      {"width_m", t.width_m},
                      {"states", std::move(states)}});
  }
  doc["tracks"] = std::move(tracks);
  return doc;
}

std::string episode_to_string(const Episode& episode) { return episode_to_json(episode).dump(1) + "\n"; }

Episode load_episode(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open episode file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
  try {
    return episode_from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(e.field(), std::string(e.what()) + " (in " + path.string() + ")");
  }
}

void save_episode(const Episode& episode, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write episode file " + path.string());
  out << episode_to_string(episode);
}

Scene scene_at(const Episode& episode, int step) {
  Scene scene;
  for (std::size_t i = 0; i < episode.tracks.size(); ++i) {
    const auto& t = episode.tracks[i];
    if (t.alive_at(step)) {
      scene.states.push_back(t.at(step));
      scene.track_indices.push_back(i);
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Neighbors and observation

NeighborSet find_neighbors(std::span<const AgentState> scene, std::size_t ego, const RoadLayout& layout) {
  NeighborSet slots;
  std::array<double, kNeighborSlots> best;
  best.fill(std::numeric_limits<double>::infinity());
  const AgentState& e = scene[ego];
  const int ego_lane = layout.lane_of(e.y);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (i == ego) continue;
    const int lane = layout.lane_of(scene[i].y);
    int base;
    if (lane == ego_lane) {
      base = static_cast<int>(NeighborSlot::kSameFront);
    } else if (lane == ego_lane + 1) {
      base = static_cast<int>(NeighborSlot::kLeftFront);
    } else if (lane == ego_lane - 1) {
      base = static_cast<int>(NeighborSlot::kRightFront);
    } else {
      continue;
    }
    const double dx = scene[i].x - e.x;
    const int slot = base + (dx >= 0.0 ? 0 : 1);
    const double dist = std::abs(dx);
    if (dist < best[static_cast<std::size_t>(slot)]) {
      best[static_cast<std::size_t>(slot)] = dist;
      slots[static_cast<std::size_t>(slot)] = i;
    }
  }
  return slots;
}

Observation observe(std::span<const AgentState> scene, std::size_t ego, const RoadLayout& layout) {
  Observation obs;
  const AgentState& e = scene[ego];
  const auto marks = lane_marking_distances(e, layout);
  obs.at(0) = e.speed;
  obs.at(1) = e.heading;
  obs.at(2) = marks.left;
  obs.at(3) = marks.right;
  const NeighborSet slots = find_neighbors(scene, ego, layout);
  for (int slot = 0; slot < kNeighborSlots; ++slot) {
    const int off = kEgoFeatures + slot * kNeighborFeatures;
    const auto& idx = slots[static_cast<std::size_t>(slot)];
    if (!idx) {
      const bool front = slot % 2 == 0;
      obs.at(off + 0) = 0.0;
      obs.at(off + 1) = front ? kSentinelDistance : -kSentinelDistance;
      obs.at(off + 2) = 0.0;
      obs.at(off + 3) = 0.0;
      obs.at(off + 4) = 0.0;
      continue;
    }
    const AgentState& n = scene[*idx];
    obs.at(off + 0) = n.heading;
    obs.at(off + 1) = n.x - e.x;
    obs.at(off + 2) = n.y - e.y;
    obs.at(off + 3) = n.speed - e.speed;
    obs.at(off + 4) = n.accel - e.accel;
  }
  return obs;
}

namespace {

std::size_t ego_position(const Episode& episode, const Scene& scene, std::string_view agent_id, int step) {
  const auto track = episode.track_index(agent_id);
  if (!track) throw DataError("episode '" + episode.id + "' has no agent '" + std::string(agent_id) + "'");
  for (std::size_t i = 0; i < scene.track_indices.size(); ++i) {
    if (scene.track_indices[i] == *track) return i;
  }
  throw DataError("agent '" + std::string(agent_id) + "' is not alive at step " + std::to_string(step));
}

}  // namespace

Observation build_observation(const Episode& episode, std::string_view agent_id, int step) {
  const Scene scene = scene_at(episode, step);
  const std::size_t ego = ego_position(episode, scene, agent_id, step);
  return observe(scene.states, ego, episode.layout);
}

// ---------------------------------------------------------------------------
// IRL features

bool lane_available(std::span<const AgentState> scene, std::size_t ego, int lane, const RoadLayout& layout) {
  if (!layout.has_lane(lane)) return false;
  const AgentState& e = scene[ego];
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (i == ego || layout.lane_of(scene[i].y) != lane) continue;
    const double window = 0.5 * (e.length + scene[i].length) + 2.0;
    if (std::abs(scene[i].x - e.x) < window) return false;
  }
  return true;
}

IrlFeatureVector irl_features(std::span<const AgentState> scene, std::size_t ego,
                              const AgentState* previous, const RoadLayout& layout, double delta_t) {
  IrlFeatureVector f{};
  const AgentState& e = scene[ego];
  const int lane = layout.lane_of(e.y);
  const double d_center = std::abs(e.y - layout.lane_center(lane));

  f[kVEgo] = e.speed;
  f[kALong] = std::abs(e.accel);
  f[kDCenterline] = d_center;
  if (previous != nullptr) {
    const double lat_v = e.speed * std::sin(e.heading);
    const double prev_lat_v = previous->speed * std::sin(previous->heading);
    const double prev_center = std::abs(previous->y - layout.lane_center(layout.lane_of(previous->y)));
    f[kALat] = std::abs(lat_v - prev_lat_v) / delta_t;
    f[kJLong] = std::abs(e.accel - previous->accel) / delta_t;
    f[kDCenterlineRate] = std::abs(d_center - prev_center) / delta_t;
  }

  const NeighborSet slots = find_neighbors(scene, ego, layout);
  const auto& front = slots[static_cast<std::size_t>(NeighborSlot::kSameFront)];
  const auto& rear = slots[static_cast<std::size_t>(NeighborSlot::kSameRear)];
  f[kThwFront] = kThwCap;
  if (front && e.speed >= kThwMinSpeed) {
    const double gap = scene[*front].x - e.x;
    if (gap > 0.0) f[kThwFront] = gap / e.speed;
  }
  f[kThwRear] = kThwCap;
  if (rear && scene[*rear].speed >= kThwMinSpeed) {
    const double gap = e.x - scene[*rear].x;
    if (gap > 0.0) f[kThwRear] = gap / scene[*rear].speed;
  }
  f[kAvailLeft] = lane_available(scene, ego, lane + 1, layout) ? 1.0 : 0.0;
  f[kAvailRight] = lane_available(scene, ego, lane - 1, layout) ? 1.0 : 0.0;
  return f;
}

IrlFeatureVector extract_irl_features(const Episode& episode, std::string_view agent_id, int step) {
  const Scene scene = scene_at(episode, step);
  const std::size_t ego = ego_position(episode, scene, agent_id, step);
  const AgentTrack& track = episode.tracks[scene.track_indices[ego]];
  const AgentState* previous = track.alive_at(step - 1) ? &track.at(step - 1) : nullptr;
  return irl_features(scene.states, ego, previous, episode.layout, episode.delta_t);
}

// ---------------------------------------------------------------------------
// Normalizer

FeatureNormalizer::FeatureNormalizer(const IrlFeatureVector& min, const IrlFeatureVector& max)
    : min_(min), max_(max) {
  for (int i = 0; i < kIrlFeatureCount; ++i) {
    if (max_[static_cast<std::size_t>(i)] < min_[static_cast<std::size_t>(i)]) {
      throw DataError("normalizer feature '" + std::string(kIrlFeatureNames[static_cast<std::size_t>(i)]) +
                      "' has max < min");
    }
  }
}

FeatureNormalizer FeatureNormalizer::fit(std::span<const IrlFeatureVector> corpus) {
  if (corpus.empty()) throw DataError("cannot fit a feature normalizer on an empty corpus");
  IrlFeatureVector lo = corpus.front();
  IrlFeatureVector hi = corpus.front();
  for (const auto& f : corpus) {
    for (std::size_t i = 0; i < lo.size(); ++i) {
      lo[i] = std::min(lo[i], f[i]);
      hi[i] = std::max(hi[i], f[i]);
    }
  }
  return FeatureNormalizer(lo, hi);
}

IrlFeatureVector FeatureNormalizer::apply(const IrlFeatureVector& raw) const {
  IrlFeatureVector out{};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double range = max_[i] - min_[i];
    if (range <= 0.0) {
      out[i] = 0.0;
      continue;
    }
    out[i] = std::clamp((raw[i] - min_[i]) / range, 0.0, 1.0);
  }
  return out;
}

json FeatureNormalizer::to_json() const {
  json doc = json::object();
  for (std::size_t i = 0; i < kIrlFeatureNames.size(); ++i) {
    doc[std::string(kIrlFeatureNames[i])] = {{"min", min_[i]}, {"max", max_[i]}};
  }
  return doc;
}

FeatureNormalizer FeatureNormalizer::from_json(const json& doc) {
  IrlFeatureVector lo{}, hi{};
  for (std::size_t i = 0; i < kIrlFeatureNames.size(); ++i) {
    const std::string name(kIrlFeatureNames[i]);
    const json& entry = require(doc, name, "normalizer");
    lo[i] = require_number(entry, "min", "normalizer." + name);
    hi[i] = require_number(entry, "max", "normalizer." + name);
  }
  return FeatureNormalizer(lo, hi);
}

}  // namespace drivestyle
