#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivestyle/dataset.hpp"
#include "drivestyle/sim.hpp"
#include "drivestyle/style_label.hpp"

namespace drivestyle {

/// Car-following behavior of one generated population.
struct SynthPreset {
  IdmParams idm;
  double reaction_delay = 0.0;  // s, age of the lead state the follower reacts to
  double accel_noise = 0.0;     // m/s^2, stationary std of the throttle jitter
  double noise_time = 1.0;      // s, correlation time of the throttle jitter
};

/// Scripted highway traffic: every lane carries one platoon whose head
/// ("pacer") oscillates its speed sinusoidally, followed by IDM drivers drawn
/// from three presets (tailgating, medium and large headway).
struct SynthConfig {
  int episodes = 20;
  int steps = 150;
  double delta_t = 0.1;
  RoadLayout layout;
  int agents_per_lane = 4;  // pacer included
  bool style_per_lane = true;  // all followers of a lane share one preset
  std::array<double, kStyleCount> follower_mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::array<SynthPreset, kStyleCount> presets = default_presets();
  double pacer_speed_min = 16.0;
  double pacer_speed_max = 19.0;
  double pacer_amplitude_min = 4.0;
  double pacer_amplitude_max = 6.0;
  double pacer_period_min = 6.0;
  double pacer_period_max = 8.0;
  double pacer_x_min = 170.0;
  double pacer_x_max = 190.0;
  std::uint64_t seed = 0;

  static std::array<SynthPreset, kStyleCount> default_presets();
  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& doc);
};

struct SynthLabel {
  std::string agent_key;  // "<episode>/<agent>"
  DrivingStyle style = DrivingStyle::kNormal;
};

struct SynthCorpus {
  std::vector<Episode> episodes;
  std::vector<SynthLabel> labels;  // episode then track order
};

/// Deterministic in the seed. Pacers are labeled cautious: they never have a
/// lead.
SynthCorpus generate_corpus(const SynthConfig& config);

nlohmann::json synth_labels_to_json(const std::vector<SynthLabel>& labels);
std::vector<SynthLabel> synth_labels_from_json(const nlohmann::json& doc);

}  // namespace drivestyle
