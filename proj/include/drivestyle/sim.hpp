#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "drivestyle/dataset.hpp"
#include "drivestyle/geometry.hpp"
#include "drivestyle/style_label.hpp"

namespace drivestyle {

struct Action {
  double accel = 0.0;          // m/s^2
  double steering_rate = 0.0;  // rad/s
};

struct IdmParams {
  double desired_speed = 30.0;     // v0
  double time_headway = 1.5;       // T
  double min_gap = 2.0;            // s0
  double max_accel = 1.5;          // a
  double comfortable_decel = 2.0;  // b
  double exponent = 4.0;           // delta
};

struct SimConfig {
  double delta_t = 0.1;
  int max_steps = 300;
  double wheelbase = 2.8;
  double accel_min = -9.81;
  double accel_max = 5.0;
  double steering_rate_min = -0.5;
  double steering_rate_max = 0.5;
  double max_steering_angle = 0.6;
  IdmParams idm;
  std::uint64_t seed = 0;
};

/// Kinematic bicycle step with clamped action. The returned accel is the
/// realized one, (v' - v) / dt.
AgentState step_dynamics(const AgentState& state, const Action& action, const SimConfig& config);

/// Inverse of step_dynamics along a recorded track: the actions that replay
/// it exactly when the track obeys the kinematic model.
std::vector<Action> recover_actions(const AgentTrack& track, const SimConfig& config);

/// Desired dynamic gap s*.
double idm_desired_gap(double v, double v_lead, const IdmParams& params);

struct IdmLead {
  double speed = 0.0;
  double gap = 0.0;  // bumper to bumper
};
/// Throws DataError if a lead is given with gap <= 0.
double idm_acceleration(double v, const std::optional<IdmLead>& lead, const IdmParams& params);

/// Separating-axis test on the two oriented footprints. Touching edges do not
/// count as overlap.
bool footprints_overlap(const AgentState& a, const AgentState& b);

enum class EventKind : int { kGoalReached = 0, kOffRoad = 1, kCollision = 2 };
std::string_view event_name(EventKind kind);
std::optional<EventKind> parse_event(std::string_view name);

struct TerminationEvent {
  std::string agent_id;
  EventKind kind = EventKind::kGoalReached;
  int step = 0;
  bool operator==(const TerminationEvent&) const = default;
};

nlohmann::json events_to_json(std::span<const TerminationEvent> events);
std::vector<TerminationEvent> events_from_json(const nlohmann::json& doc);

struct StyleMix {
  std::array<double, kStyleCount> proportions{0.0, 1.0, 0.0};  // aggressive, normal, cautious
  /// Throws UsageError unless every entry is in [0, 1] and they sum to 1.
  void validate() const;
};

/// Largest-remainder apportionment of `agent_count` agents, placed by a
/// seeded shuffle.
std::vector<DrivingStyle> assign_policies(std::size_t agent_count, const StyleMix& mix, std::uint64_t seed);

// ---------------------------------------------------------------------------
// World

enum class ControllerKind : int { kPolicy = 0, kReplay = 1, kIdm = 2 };

struct WorldAgent {
  std::string id;
  std::size_t track = 0;
  AgentState state;
  bool spawned = false;
  bool alive = false;
  ControllerKind controller = ControllerKind::kPolicy;
  DrivingStyle style = DrivingStyle::kNormal;
  std::vector<AgentState> history;
};

struct EpisodeMode {
  enum class Kind { kLogReplay, kSelfReplay };
  Kind kind = Kind::kSelfReplay;
  std::string ego_id;

  static EpisodeMode log_replay(std::string ego) { return {Kind::kLogReplay, std::move(ego)}; }
  static EpisodeMode self_replay() { return {Kind::kSelfReplay, {}}; }
};

/// Per acting agent result of one world step.
struct AgentStepOutcome {
  std::size_t agent = 0;
  AgentState previous;
  AgentState current;
  Observation next_observation;
  IrlFeatureVector raw_features{};
  std::optional<EventKind> event;
};

/// Deterministic multi-agent highway world driven from a recorded episode.
/// One agent per track, spawned at its entry step with its recorded state.
class World {
 public:
  /// `styles` holds one style per track; only policy-controlled agents use it.
  World(const Episode& source, EpisodeMode mode, std::vector<DrivingStyle> styles, const SimConfig& config);

  int step() const { return step_; }
  bool done() const;
  const RoadLayout& layout() const { return layout_; }
  const std::vector<WorldAgent>& agents() const { return agents_; }
  const std::vector<TerminationEvent>& events() const { return events_; }
  const EpisodeMode& mode() const { return mode_; }

  /// Alive policy-controlled agents, in track order.
  std::vector<std::size_t> acting_agents() const;
  Observation observation(std::size_t agent) const;

  /// Advances one step. `actions` aligns with acting_agents().
  std::vector<AgentStepOutcome> advance(std::span<const Action> actions);

  /// Trajectory log in the episode schema.
  Episode log() const;

 private:
  void spawn_due();
  void detect_events(std::vector<std::optional<EventKind>>& pending) const;
  void handover_to_idm();
  std::vector<AgentState> alive_scene(std::vector<std::size_t>& agent_of_slot) const;
  double idm_command(std::size_t agent) const;

  const Episode* source_;
  EpisodeMode mode_;
  SimConfig config_;
  RoadLayout layout_;
  std::vector<WorldAgent> agents_;
  std::vector<TerminationEvent> events_;
  std::optional<std::size_t> ego_;
  int step_ = 0;
  int last_spawn_step_ = 0;
};

// ---------------------------------------------------------------------------
// Policies and episode rollout

struct PolicyInput {
  const Observation& observation;
  const AgentState& state;
  const std::string& agent_id;
  int step;
};

class DrivingPolicy {
 public:
  virtual ~DrivingPolicy() = default;
  virtual Action act(const PolicyInput& input, std::mt19937_64& rng) const = 0;
};

class ZeroActionPolicy final : public DrivingPolicy {
 public:
  Action act(const PolicyInput&, std::mt19937_64&) const override { return {}; }
};

/// Plays a fixed action sequence per agent, indexed by steps since spawn.
class ScriptedPolicy final : public DrivingPolicy {
 public:
  void set(const std::string& agent_id, int spawn_step, std::vector<Action> actions);
  Action act(const PolicyInput& input, std::mt19937_64& rng) const override;

 private:
  std::map<std::string, std::pair<int, std::vector<Action>>> scripts_;
};

using PolicySet = std::map<DrivingStyle, const DrivingPolicy*>;

struct SimResult {
  Episode log;
  std::vector<TerminationEvent> events;
  int agent_count = 0;
};

/// Rolls `world` forward until done. Throws UsageError if an acting agent's
/// style has no policy.
SimResult run_world(World& world, const PolicySet& policies, std::uint64_t seed);
SimResult run_episode(const Episode& episode, const EpisodeMode& mode, const PolicySet& policies,
                      std::vector<DrivingStyle> styles, const SimConfig& config);

/// Independent worlds rolled out in parallel, results in input order.
std::vector<SimResult> run_episodes(std::span<const Episode> episodes, const EpisodeMode& mode,
                                    const PolicySet& policies, std::span<const std::vector<DrivingStyle>> styles,
                                    const SimConfig& config);
std::vector<SimResult> run_episodes_serial(std::span<const Episode> episodes, const EpisodeMode& mode,
                                           const PolicySet& policies,
                                           std::span<const std::vector<DrivingStyle>> styles,
                                           const SimConfig& config);

}  // namespace drivestyle
