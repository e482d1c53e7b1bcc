#include "drivestyle/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "drivestyle/error.hpp"
#include "drivestyle/json_fields.hpp"

namespace drivestyle {

std::array<SynthPreset, kStyleCount> SynthConfig::default_presets() {
  std::array<SynthPreset, kStyleCount> p{};
  p[static_cast<std::size_t>(DrivingStyle::kAggressive)] = {{33.0, 0.6, 0.5, 4.0, 9.0, 4.0}, 1.0};
  p[static_cast<std::size_t>(DrivingStyle::kNormal)] = {{33.0, 1.0, 2.0, 1.5, 2.0, 4.0}, 0.3};
  p[static_cast<std::size_t>(DrivingStyle::kCautious)] = {{33.0, 2.8, 3.0, 1.0, 1.5, 4.0}, 0.3};
  return p;
}

void SynthConfig::validate() const {
  if (episodes < 1) throw UsageError("synth.episodes must be >= 1");
  if (steps < 2) throw UsageError("synth.steps must be >= 2");
  if (!(delta_t > 0.0)) throw UsageError("synth.delta_t must be positive");
  if (layout.lane_count < 1 || !(layout.lane_width > 0.0) || !(layout.length > 0.0)) {
    throw UsageError("synth.layout is invalid");
  }
  if (agents_per_lane < 1) throw UsageError("synth.agents_per_lane must be >= 1");
  StyleMix{follower_mix}.validate();
  if (pacer_speed_min > pacer_speed_max || pacer_amplitude_min > pacer_amplitude_max ||
      pacer_period_min > pacer_period_max || pacer_x_min > pacer_x_max || !(pacer_period_min > 0.0)) {
    throw UsageError("synth pacer ranges must satisfy min <= max");
  }
  for (const auto& p : presets) {
    if (p.reaction_delay < 0.0 || p.accel_noise < 0.0 || !(p.noise_time > 0.0)) {
      throw UsageError("synth presets need reaction_delay >= 0, accel_noise >= 0 and noise_time > 0");
    }
  }
}

namespace {

nlohmann::json idm_json(const IdmParams& p) {
  return {{"desired_speed", p.desired_speed}, {"time_headway", p.time_headway},
          {"min_gap", p.min_gap},             {"max_accel", p.max_accel},
          {"comfortable_decel", p.comfortable_decel}, {"exponent", p.exponent}};
}

IdmParams idm_from(const nlohmann::json& doc, IdmParams p, const std::string& path) {
  read_optional(doc, "desired_speed", p.desired_speed, path);
  read_optional(doc, "time_headway", p.time_headway, path);
  read_optional(doc, "min_gap", p.min_gap, path);
  read_optional(doc, "max_accel", p.max_accel, path);
  read_optional(doc, "comfortable_decel", p.comfortable_decel, path);
  read_optional(doc, "exponent", p.exponent, path);
  return p;
}

}  // namespace

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json presets_doc = nlohmann::json::object();
  for (DrivingStyle s : kAllStyles) {
    const auto& p = presets[static_cast<std::size_t>(s)];
    presets_doc[std::string(style_name(s))] = {{"idm", idm_json(p.idm)}, {"reaction_delay", p.reaction_delay},
                                               {"accel_noise", p.accel_noise},
                                               {"noise_time", p.noise_time}};
  }
  return {{"episodes", episodes},
          {"steps", steps},
          {"delta_t", delta_t},
          {"layout", {{"lane_count", layout.lane_count}, {"lane_width", layout.lane_width}, {"length", layout.length}}},
          {"agents_per_lane", agents_per_lane},
          {"style_per_lane", style_per_lane},
          {"follower_mix", follower_mix},
          {"presets", presets_doc},
          {"pacer",
           {{"speed", {pacer_speed_min, pacer_speed_max}},
            {"amplitude", {pacer_amplitude_min, pacer_amplitude_max}},
            {"period", {pacer_period_min, pacer_period_max}},
            {"x", {pacer_x_min, pacer_x_max}}}},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& doc) {
  SynthConfig c;
  const std::string p = "synth";
  read_optional(doc, "episodes", c.episodes, p);
  read_optional(doc, "steps", c.steps, p);
  read_optional(doc, "delta_t", c.delta_t, p);
  read_optional(doc, "agents_per_lane", c.agents_per_lane, p);
  read_optional(doc, "style_per_lane", c.style_per_lane, p);
  read_optional(doc, "follower_mix", c.follower_mix, p);
  read_optional(doc, "seed", c.seed, p);
  if (doc.contains("layout")) {
    const auto& l = doc.at("layout");
    read_optional(l, "lane_count", c.layout.lane_count, p + ".layout");
    read_optional(l, "lane_width", c.layout.lane_width, p + ".layout");
    read_optional(l, "length", c.layout.length, p + ".layout");
  }
  if (doc.contains("presets")) {
    const auto& ps = doc.at("presets");
    for (DrivingStyle s : kAllStyles) {
      const std::string name(style_name(s));
      if (!ps.contains(name)) continue;
      auto& preset = c.presets[static_cast<std::size_t>(s)];
      const auto& entry = ps.at(name);
      if (entry.contains("idm")) preset.idm = idm_from(entry.at("idm"), preset.idm, p + ".presets." + name + ".idm");
      read_optional(entry, "reaction_delay", preset.reaction_delay, p + ".presets." + name);
      read_optional(entry, "accel_noise", preset.accel_noise, p + ".presets." + name);
      read_optional(entry, "noise_time", preset.noise_time, p + ".presets." + name);
    }
  }
  if (doc.contains("pacer")) {
    const auto& pc = doc.at("pacer");
    auto range = [&](const char* key, double& lo, double& hi) {
      std::array<double, 2> r{lo, hi};
      read_optional(pc, key, r, p + ".pacer");
      lo = r[0];
      hi = r[1];
    };
    range("speed", c.pacer_speed_min, c.pacer_speed_max);
    range("amplitude", c.pacer_amplitude_min, c.pacer_amplitude_max);
    range("period", c.pacer_period_min, c.pacer_period_max);
    range("x", c.pacer_x_min, c.pacer_x_max);
  }
  c.validate();
  return c;
}

namespace {

struct Driver {
  std::string id;
  DrivingStyle style = DrivingStyle::kCautious;
  bool pacer = false;
  int lead = -1;  // index of the driver ahead in the same lane
  double base_speed = 0.0, amplitude = 0.0, period = 1.0, phase = 0.0;
  std::vector<double> x, v, a;
  double jitter = 0.0;
  bool exited = false;
};

std::uint64_t episode_seed(std::uint64_t seed, int episode) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(episode), 0x5eedu};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

DrivingStyle draw_style(const std::array<double, kStyleCount>& mix, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (DrivingStyle s : kAllStyles) {
    r -= mix[static_cast<std::size_t>(s)];
    if (r < 0.0) return s;
  }
  return DrivingStyle::kCautious;
}

Episode generate_episode(const SynthConfig& cfg, int index, std::vector<SynthLabel>& labels) {
  std::mt19937_64 rng(episode_seed(cfg.seed, index));
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double kLength = 4.5;
  constexpr double kMinBumperGap = 0.3;
  constexpr double kSafeDecel = 9.0;
  constexpr double kMaxDecel = 9.0;
  constexpr double kMaxAccel = 4.0;
  const double dt = cfg.delta_t;

  std::vector<Driver> drivers;
  std::vector<int> lane_of_driver;
  for (int lane = 0; lane < cfg.layout.lane_count; ++lane) {
    Driver head;
    head.pacer = true;
    head.style = DrivingStyle::kCautious;
    head.base_speed = uni(cfg.pacer_speed_min, cfg.pacer_speed_max);
    head.amplitude = uni(cfg.pacer_amplitude_min, cfg.pacer_amplitude_max);
    head.period = uni(cfg.pacer_period_min, cfg.pacer_period_max);
    head.phase = uni(0.0, 2.0 * std::numbers::pi);
    const double v0 = head.base_speed + head.amplitude * std::sin(head.phase);
    head.x.push_back(uni(cfg.pacer_x_min, cfg.pacer_x_max));
    head.v.push_back(v0);
    head.a.push_back(0.0);
    drivers.push_back(head);
    lane_of_driver.push_back(lane);
    const DrivingStyle lane_style = draw_style(cfg.follower_mix, rng);
    for (int j = 1; j < cfg.agents_per_lane; ++j) {
      Driver f;
      f.style = cfg.style_per_lane ? lane_style : draw_style(cfg.follower_mix, rng);
      f.lead = static_cast<int>(drivers.size()) - 1;
      const IdmParams& idm = cfg.presets[static_cast<std::size_t>(f.style)].idm;
      const double gap = (idm.min_gap + v0 * idm.time_headway) * uni(1.0, 1.2);
      const double x = drivers.back().x.front() - kLength - gap;
      if (x < 0.0) break;
      f.x.push_back(x);
      f.v.push_back(v0);
      f.a.push_back(0.0);
      drivers.push_back(f);
      lane_of_driver.push_back(lane);
    }
  }

  for (int k = 0; k + 1 < cfg.steps; ++k) {
    std::vector<double> accel(drivers.size(), 0.0);
    for (std::size_t i = 0; i < drivers.size(); ++i) {
      Driver& d = drivers[i];
      if (d.exited) continue;
      if (d.pacer) {
        const double t1 = (k + 1) * dt;
        const double target = std::max(0.0, d.base_speed + d.amplitude * std::sin(2.0 * std::numbers::pi * t1 / d.period + d.phase));
        accel[i] = std::clamp((target - d.v[static_cast<std::size_t>(k)]) / dt, -kMaxDecel, kMaxAccel);
        continue;
      }
      const SynthPreset& preset = cfg.presets[static_cast<std::size_t>(d.style)];
      const Driver& lead = drivers[static_cast<std::size_t>(d.lead)];
      const auto kk = static_cast<std::size_t>(k);
      const int delay = static_cast<int>(std::lround(preset.reaction_delay / dt));
      const auto seen = static_cast<std::size_t>(std::max(0, k - delay));
      std::optional<IdmLead> idm_lead;
      if (seen < lead.x.size()) {
        const double gap = lead.x[seen] - d.x[seen] - kLength;
        idm_lead = IdmLead{lead.v[seen], std::max(gap, 0.1)};
      }
      double a = idm_acceleration(d.v[seen], idm_lead, preset.idm);
      if (preset.accel_noise > 0.0) {
        const double decay = std::exp(-dt / preset.noise_time);
        d.jitter = decay * d.jitter + preset.accel_noise * std::sqrt(1.0 - decay * decay) * normal(rng);
        a += d.jitter;
      }
      if (kk < lead.x.size()) {
        const double gap_now = lead.x[kk] - d.x[kk] - kLength;
        if (gap_now < 1.0) a = -kMaxDecel;
      }
      accel[i] = std::clamp(a, -kMaxDecel, kMaxAccel);
    }
    for (std::size_t i = 0; i < drivers.size(); ++i) {
      Driver& d = drivers[i];
      if (d.exited) continue;
      const auto kk = static_cast<std::size_t>(k);
      double v_next = std::max(0.0, d.v[kk] + accel[i] * dt);
      const double x_next = d.x[kk] + d.v[kk] * dt;
      if (d.lead >= 0) {
        // Speed from which the follower can still stop behind a lead that
        // brakes equally hard.
        const Driver& lead = drivers[static_cast<std::size_t>(d.lead)];
        if (kk + 1 < lead.x.size()) {
          const double room = std::max(0.0, lead.x[kk + 1] - x_next - kLength - kMinBumperGap);
          const double vl = lead.v[kk + 1];
          const double safe = -kSafeDecel * dt + std::sqrt(kSafeDecel * kSafeDecel * dt * dt + vl * vl + 2.0 * kSafeDecel * room);
          v_next = std::max(std::min(v_next, safe), std::max(0.0, d.v[kk] - kMaxDecel * dt));
        }
      }
      d.x.push_back(x_next);
      d.a.push_back((v_next - d.v[kk]) / dt);
      d.v.push_back(v_next);
      if (d.x.back() > cfg.layout.length) d.exited = true;
    }
  }

  Episode ep;
  ep.id = "synth_" + std::to_string(index);
  ep.delta_t = dt;
  ep.layout = cfg.layout;
  for (std::size_t i = 0; i < drivers.size(); ++i) {
    const Driver& d = drivers[i];
    AgentTrack t;
    t.agent_id = "a" + std::to_string(i);
    t.start_step = 0;
    t.length_m = kLength;
    for (std::size_t k = 0; k < d.x.size(); ++k) {
      AgentState s;
      s.x = d.x[k];
      s.y = cfg.layout.lane_center(lane_of_driver[i]);
      s.speed = d.v[k];
      s.accel = d.a[k];
      s.length = kLength;
      t.states.push_back(s);
    }
    labels.push_back({ep.id + "/" + t.agent_id, d.style});
    ep.tracks.push_back(std::move(t));
  }
  return ep;
}

}  // namespace

SynthCorpus generate_corpus(const SynthConfig& config) {
  config.validate();
  SynthCorpus corpus;
  for (int e = 0; e < config.episodes; ++e) corpus.episodes.push_back(generate_episode(config, e, corpus.labels));
  return corpus;
}

nlohmann::json synth_labels_to_json(const std::vector<SynthLabel>& labels) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& l : labels) doc.push_back({{"agent_key", l.agent_key}, {"style", std::string(style_name(l.style))}});
  return doc;
}

std::vector<SynthLabel> synth_labels_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ParseError("labels", "expected an array");
  std::vector<SynthLabel> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string path = "labels[" + std::to_string(i) + "]";
    const auto& e = doc[i];
    if (!e.is_object() || !e.contains("agent_key") || !e.contains("style")) {
      throw ParseError(path, "expected {agent_key, style}");
    }
    const auto style = parse_style(e.at("style").get<std::string>());
    if (!style) throw ParseError(path + ".style", "unknown style");
    out.push_back({e.at("agent_key").get<std::string>(), *style});
  }
  return out;
}

}  // namespace drivestyle
