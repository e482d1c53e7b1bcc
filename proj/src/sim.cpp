#include "drivestyle/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "drivestyle/error.hpp"
#include "drivestyle/styles.hpp"

namespace drivestyle {

AgentState step_dynamics(const AgentState& state, const Action& action, const SimConfig& config) {
  const double dt = config.delta_t;
  const double accel = std::clamp(action.accel, config.accel_min, config.accel_max);
  const double rate = std::clamp(action.steering_rate, config.steering_rate_min, config.steering_rate_max);
  AgentState next = state;
  next.steering_angle =
      std::clamp(state.steering_angle + rate * dt, -config.max_steering_angle, config.max_steering_angle);
  next.heading = wrap_angle(state.heading + (state.speed / config.wheelbase) * std::tan(next.steering_angle) * dt);
  next.x = state.x + state.speed * std::cos(next.heading) * dt;
  next.y = state.y + state.speed * std::sin(next.heading) * dt;
  next.speed = std::max(0.0, state.speed + accel * dt);
  next.accel = (next.speed - state.speed) / dt;
  return next;
}

std::vector<Action> recover_actions(const AgentTrack& track, const SimConfig& config) {
  const double dt = config.delta_t;
  std::vector<Action> actions;
  double steering = 0.0;
  for (std::size_t k = 0; k + 1 < track.states.size(); ++k) {
    const AgentState& cur = track.states[k];
    const AgentState& nxt = track.states[k + 1];
    Action a;
    a.accel = (nxt.speed - cur.speed) / dt;
    double next_steering = steering;
    if (cur.speed > 0.0) {
      const double dh = wrap_angle(nxt.heading - cur.heading);
      next_steering = std::atan(dh * config.wheelbase / (cur.speed * dt));
    }
    a.steering_rate = (next_steering - steering) / dt;
    steering = next_steering;
    actions.push_back(a);
  }
  return actions;
}

double idm_desired_gap(double v, double v_lead, const IdmParams& p) {
  return p.min_gap + v * p.time_headway + v * (v - v_lead) / (2.0 * std::sqrt(p.max_accel * p.comfortable_decel));
}

double idm_acceleration(double v, const std::optional<IdmLead>& lead, const IdmParams& p) {
  const double free_road = 1.0 - std::pow(v / p.desired_speed, p.exponent);
  if (!lead) return p.max_accel * free_road;
  if (lead->gap <= 0.0) throw DataError("IDM gap must be positive, got " + std::to_string(lead->gap));
  const double s_star = std::max(0.0, idm_desired_gap(v, lead->speed, p));
  const double interaction = s_star / lead->gap;
  return p.max_accel * (free_road - interaction * interaction);
}

bool footprints_overlap(const AgentState& a, const AgentState& b) {
  // Cheap reject on bounding circles.
  const double ra = 0.5 * std::hypot(a.length, a.width);
  const double rb = 0.5 * std::hypot(b.length, b.width);
  const double dx = a.x - b.x, dy = a.y - b.y;
  if (dx * dx + dy * dy > (ra + rb) * (ra + rb)) return false;

  const auto ca = footprint_corners(a);
  const auto cb = footprint_corners(b);
  const std::array<Point2, 4> axes = {
      Point2{std::cos(a.heading), std::sin(a.heading)}, Point2{-std::sin(a.heading), std::cos(a.heading)},
      Point2{std::cos(b.heading), std::sin(b.heading)}, Point2{-std::sin(b.heading), std::cos(b.heading)}};
  for (const auto& axis : axes) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (const auto& p : ca) {
      const double v = p.x * axis.x + p.y * axis.y;
      amin = std::min(amin, v);
      amax = std::max(amax, v);
    }
    for (const auto& p : cb) {
      const double v = p.x * axis.x + p.y * axis.y;
      bmin = std::min(bmin, v);
      bmax = std::max(bmax, v);
    }
    if (amax <= bmin || bmax <= amin) return false;
  }
  return true;
}

std::string_view event_name(EventKind kind) {
  switch (kind) {
    case EventKind::kGoalReached: return "goal_reached";
    case EventKind::kOffRoad: return "off_road";
    case EventKind::kCollision: return "collision";
  }
  return "unknown";
}

std::optional<EventKind> parse_event(std::string_view name) {
  for (EventKind k : {EventKind::kGoalReached, EventKind::kOffRoad, EventKind::kCollision}) {
    if (event_name(k) == name) return k;
  }
  return std::nullopt;
}

nlohmann::json events_to_json(std::span<const TerminationEvent> events) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : events) {
    doc.push_back({{"agent_id", e.agent_id}, {"kind", std::string(event_name(e.kind))}, {"step", e.step}});
  }
  return doc;
}

std::vector<TerminationEvent> events_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ParseError("events", "expected an array");
  std::vector<TerminationEvent> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string path = "events[" + std::to_string(i) + "]";
    const auto& e = doc[i];
    if (!e.is_object() || !e.contains("agent_id") || !e.contains("kind") || !e.contains("step")) {
      throw ParseError(path, "expected {agent_id, kind, step}");
    }
    const auto kind = parse_event(e.at("kind").get<std::string>());
    if (!kind) throw ParseError(path + ".kind", "unknown event kind");
    out.push_back({e.at("agent_id").get<std::string>(), *kind, e.at("step").get<int>()});
  }
  return out;
}

void StyleMix::validate() const {
  double sum = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("style mix entries must lie in [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw UsageError("style mix must sum to 1");
}

std::vector<DrivingStyle> assign_policies(std::size_t agent_count, const StyleMix& mix, std::uint64_t seed) {
  mix.validate();
  std::array<std::size_t, kStyleCount> counts{};
  std::array<double, kStyleCount> remainders{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    const double quota = mix.proportions[s] * static_cast<double>(agent_count);
    counts[s] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainders[s] = quota - static_cast<double>(counts[s]);
    assigned += counts[s];
  }
  std::array<std::size_t, kStyleCount> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < agent_count; i = (i + 1) % order.size()) {
    ++counts[order[i]];
    ++assigned;
  }
  std::vector<DrivingStyle> styles;
  styles.reserve(agent_count);
  for (std::size_t s = 0; s < counts.size(); ++s) styles.insert(styles.end(), counts[s], kAllStyles[s]);
  std::mt19937_64 rng(seed);
  std::shuffle(styles.begin(), styles.end(), rng);
  return styles;
}

// ---------------------------------------------------------------------------
// World

World::World(const Episode& source, EpisodeMode mode, std::vector<DrivingStyle> styles, const SimConfig& config)
    : source_(&source), mode_(std::move(mode)), config_(config), layout_(source.layout) {
  if (styles.size() != source.tracks.size()) {
    throw UsageError("need one style per track: got " + std::to_string(styles.size()) + " for " +
                     std::to_string(source.tracks.size()) + " tracks");
  }
  if (!(config_.delta_t > 0.0)) throw UsageError("simulation delta_t must be positive");
  agents_.resize(source.tracks.size());
  for (std::size_t i = 0; i < source.tracks.size(); ++i) {
    WorldAgent& a = agents_[i];
    a.id = source.tracks[i].agent_id;
    a.track = i;
    a.style = styles[i];
    a.controller = mode_.kind == EpisodeMode::Kind::kSelfReplay ? ControllerKind::kPolicy : ControllerKind::kReplay;
    last_spawn_step_ = std::max(last_spawn_step_, source.tracks[i].start_step);
  }
  if (mode_.kind == EpisodeMode::Kind::kLogReplay) {
    ego_ = source.track_index(mode_.ego_id);
    if (!ego_) throw DataError("log-replay ego '" + mode_.ego_id + "' not in episode '" + source.id + "'");
    agents_[*ego_].controller = ControllerKind::kPolicy;
  }
  spawn_due();
  std::vector<std::optional<EventKind>> pending;
  detect_events(pending);
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (pending[i]) {
      agents_[i].alive = false;
      events_.push_back({agents_[i].id, *pending[i], step_});
    }
  }
}

void World::spawn_due() {
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    WorldAgent& a = agents_[i];
    const AgentTrack& t = source_->tracks[i];
    if (a.spawned || t.start_step != step_) continue;
    a.spawned = true;
    a.alive = true;
    a.state = t.states.front();
    a.state.steering_angle = 0.0;
    a.history.push_back(a.state);
  }
}

bool World::done() const {
  if (step_ >= config_.max_steps) return true;
  if (ego_) {
    const WorldAgent& e = agents_[*ego_];
    if (e.spawned && !e.alive) return true;
  }
  if (step_ < last_spawn_step_) return false;
  return std::none_of(agents_.begin(), agents_.end(), [](const WorldAgent& a) { return a.alive; });
}

std::vector<std::size_t> World::acting_agents() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (agents_[i].alive && agents_[i].controller == ControllerKind::kPolicy) out.push_back(i);
  }
  return out;
}

std::vector<AgentState> World::alive_scene(std::vector<std::size_t>& agent_of_slot) const {
  std::vector<AgentState> scene;
  agent_of_slot.clear();
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (!agents_[i].alive) continue;
    scene.push_back(agents_[i].state);
    agent_of_slot.push_back(i);
  }
  return scene;
}

Observation World::observation(std::size_t agent) const {
  std::vector<std::size_t> slots;
  const auto scene = alive_scene(slots);
  const auto pos = std::find(slots.begin(), slots.end(), agent);
  if (pos == slots.end()) throw UsageError("agent '" + agents_.at(agent).id + "' is not alive");
  return observe(scene, static_cast<std::size_t>(pos - slots.begin()), layout_);
}

double World::idm_command(std::size_t agent) const {
  const AgentState& me = agents_[agent].state;
  const int lane = layout_.lane_of(me.y);
  std::optional<IdmLead> lead;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < agents_.size(); ++j) {
    if (j == agent || !agents_[j].alive) continue;
    const AgentState& o = agents_[j].state;
    const double dx = o.x - me.x;
    if (dx < 0.0 || layout_.lane_of(o.y) != lane || dx >= best) continue;
    best = dx;
    lead = IdmLead{o.speed, dx - 0.5 * (o.length + me.length)};
  }
  if (lead && lead->gap <= 0.0) return config_.accel_min;
  return idm_acceleration(me.speed, lead, config_.idm);
}

void World::detect_events(std::vector<std::optional<EventKind>>& pending) const {
  pending.assign(agents_.size(), std::nullopt);
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (!agents_[i].alive) continue;
    for (std::size_t j = i + 1; j < agents_.size(); ++j) {
      if (!agents_[j].alive) continue;
      if (footprints_overlap(agents_[i].state, agents_[j].state)) {
        pending[i] = EventKind::kCollision;
        pending[j] = EventKind::kCollision;
      }
    }
  }
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (!agents_[i].alive || pending[i]) continue;
    if (footprint_off_road(agents_[i].state, layout_)) {
      pending[i] = EventKind::kOffRoad;
    } else if (agents_[i].state.x > layout_.length) {
      pending[i] = EventKind::kGoalReached;
    }
  }
}

void World::handover_to_idm() {
  if (!ego_ || !agents_[*ego_].alive) return;
  const AgentState& ego = agents_[*ego_].state;
  const int ego_lane = layout_.lane_of(ego.y);
  for (auto& a : agents_) {
    if (!a.alive || a.controller != ControllerKind::kReplay) continue;
    if (layout_.lane_of(a.state.y) != ego_lane || a.state.x >= ego.x) continue;
    const double gap = ego.x - a.state.x - 0.5 * (ego.length + a.state.length);
    if (gap < idm_desired_gap(a.state.speed, ego.speed, config_.idm)) a.controller = ControllerKind::kIdm;
  }
}

std::vector<AgentStepOutcome> World::advance(std::span<const Action> actions) {
  const auto acting = acting_agents();
  if (actions.size() != acting.size()) {
    throw UsageError("expected " + std::to_string(acting.size()) + " actions, got " + std::to_string(actions.size()));
  }
  std::vector<AgentState> next(agents_.size());
  std::vector<bool> leaves(agents_.size(), false);
  std::size_t action_idx = 0;
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    const WorldAgent& a = agents_[i];
    if (!a.alive) continue;
    switch (a.controller) {
      case ControllerKind::kPolicy:
        next[i] = step_dynamics(a.state, actions[action_idx++], config_);
        break;
      case ControllerKind::kIdm: {
        const Action cmd{idm_command(i), -a.state.steering_angle / config_.delta_t};
        next[i] = step_dynamics(a.state, cmd, config_);
        break;
      }
      case ControllerKind::kReplay: {
        const AgentTrack& t = source_->tracks[a.track];
        if (t.alive_at(step_ + 1)) {
          next[i] = t.at(step_ + 1);
        } else {
          leaves[i] = true;
        }
        break;
      }
    }
  }
  std::vector<AgentState> previous(agents_.size());
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (!agents_[i].alive) continue;
    previous[i] = agents_[i].state;
    if (leaves[i]) {
      agents_[i].alive = false;
      continue;
    }
    agents_[i].state = next[i];
    agents_[i].history.push_back(next[i]);
  }
  ++step_;
  spawn_due();

  std::vector<std::optional<EventKind>> pending;
  detect_events(pending);

  std::vector<std::size_t> slots;
  const auto scene = alive_scene(slots);
  std::vector<AgentStepOutcome> outcomes;
  outcomes.reserve(acting.size());
  for (std::size_t i : acting) {
    const auto pos = static_cast<std::size_t>(std::find(slots.begin(), slots.end(), i) - slots.begin());
    AgentStepOutcome o;
    o.agent = i;
    o.previous = previous[i];
    o.current = agents_[i].state;
    o.next_observation = observe(scene, pos, layout_);
    o.raw_features = irl_features(scene, pos, &previous[i], layout_, config_.delta_t);
    o.event = pending[i];
    outcomes.push_back(o);
  }
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (pending[i]) {
      agents_[i].alive = false;
      events_.push_back({agents_[i].id, *pending[i], step_});
    }
  }
  if (mode_.kind == EpisodeMode::Kind::kLogReplay) handover_to_idm();
  return outcomes;
}

Episode World::log() const {
  Episode ep;
  ep.id = source_->id;
  ep.delta_t = config_.delta_t;
  ep.layout = layout_;
  for (const auto& a : agents_) {
    // Agents terminated on their spawn step have a single state and stay out of the log.
    if (a.history.size() < 2) continue;
    const AgentTrack& src = source_->tracks[a.track];
    AgentTrack t;
    t.agent_id = a.id;
    t.start_step = src.start_step;
    t.length_m = src.length_m;
    t.width_m = src.width_m;
    t.states = a.history;
    ep.tracks.push_back(std::move(t));
  }
  return ep;
}

// ---------------------------------------------------------------------------

void ScriptedPolicy::set(const std::string& agent_id, int spawn_step, std::vector<Action> actions) {
  scripts_[agent_id] = {spawn_step, std::move(actions)};
}

Action ScriptedPolicy::act(const PolicyInput& input, std::mt19937_64&) const {
  const auto it = scripts_.find(input.agent_id);
  if (it == scripts_.end()) return {};
  const int k = input.step - it->second.first;
  const auto& actions = it->second.second;
  if (k < 0 || k >= static_cast<int>(actions.size())) return {};
  return actions[static_cast<std::size_t>(k)];
}

SimResult run_world(World& world, const PolicySet& policies, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Action> actions;
  while (!world.done()) {
    const auto acting = world.acting_agents();
    actions.clear();
    for (std::size_t i : acting) {
      const WorldAgent& a = world.agents()[i];
      const auto it = policies.find(a.style);
      if (it == policies.end() || it->second == nullptr) {
        throw UsageError("no policy for style '" + std::string(style_name(a.style)) + "'");
      }
      const Observation obs = world.observation(i);
      actions.push_back(it->second->act(PolicyInput{obs, a.state, a.id, world.step()}, rng));
    }
    world.advance(actions);
  }
  SimResult r;
  r.log = world.log();
  r.events = world.events();
  r.agent_count = static_cast<int>(std::count_if(world.agents().begin(), world.agents().end(),
                                                  [](const WorldAgent& a) { return a.spawned; }));
  return r;
}

SimResult run_episode(const Episode& episode, const EpisodeMode& mode, const PolicySet& policies,
                      std::vector<DrivingStyle> styles, const SimConfig& config) {
  World world(episode, mode, std::move(styles), config);
  return run_world(world, policies, config.seed);
}

namespace {

std::uint64_t episode_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void check_batch(std::span<const Episode> episodes, std::span<const std::vector<DrivingStyle>> styles) {
  if (episodes.size() != styles.size()) throw UsageError("need one style list per episode");
}

}  // namespace

std::vector<SimResult> run_episodes(std::span<const Episode> episodes, const EpisodeMode& mode,
                                    const PolicySet& policies, std::span<const std::vector<DrivingStyle>> styles,
                                    const SimConfig& config) {
  check_batch(episodes, styles);
  const auto n = static_cast<std::ptrdiff_t>(episodes.size());
  std::vector<SimResult> out(episodes.size());
  std::vector<std::string> errors(episodes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      World world(episodes[k], mode, styles[k], config);
      out[k] = run_world(world, policies, episode_seed(config.seed, k));
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw UsageError(e);
  }
  return out;
}

std::vector<SimResult> run_episodes_serial(std::span<const Episode> episodes, const EpisodeMode& mode,
                                           const PolicySet& policies,
                                           std::span<const std::vector<DrivingStyle>> styles,
                                           const SimConfig& config) {
  check_batch(episodes, styles);
  std::vector<SimResult> out;
  for (std::size_t k = 0; k < episodes.size(); ++k) {
    World world(episodes[k], mode, styles[k], config);
    out.push_back(run_world(world, policies, episode_seed(config.seed, k)));
  }
  return out;
}

}  // namespace drivestyle
