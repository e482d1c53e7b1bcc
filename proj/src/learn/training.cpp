#include "drivestyle/learn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "drivestyle/error.hpp"
#include "drivestyle/json_fields.hpp"

namespace drivestyle {

double RewardShaping::event_reward(const std::optional<EventKind>& event) const {
  if (!event) return 0.0;
  switch (*event) {
    case EventKind::kCollision: return collision;
    case EventKind::kOffRoad: return off_road;
    case EventKind::kGoalReached: return goal;
  }
  return 0.0;
}

nlohmann::json RewardShaping::to_json() const {
  return {{"collision", collision}, {"off_road", off_road}, {"goal", goal}, {"feature_scale", feature_scale}};
}

RewardShaping RewardShaping::from_json(const nlohmann::json& doc) {
  RewardShaping r;
  const std::string p = "reward";
  read_optional(doc, "collision", r.collision, p);
  read_optional(doc, "off_road", r.off_road, p);
  read_optional(doc, "goal", r.goal, p);
  read_optional(doc, "feature_scale", r.feature_scale, p);
  return r;
}

double feature_reward(const RewardWeights& weights, const FeatureNormalizer& normalizer,
                      const IrlFeatureVector& raw) {
  return trajectory_reward(weights.theta, normalizer.apply(raw));
}

std::vector<Transition> offline_transitions(const Episode& episode, std::span<const std::size_t> tracks,
                                            const RewardWeights& weights, const FeatureNormalizer& normalizer,
                                            const SimConfig& sim) {
  const ActionBounds bounds = ActionBounds::from_sim(sim);
  std::vector<Transition> out;
  for (std::size_t t : tracks) {
    const AgentTrack& track = episode.tracks.at(t);
    const auto actions = recover_actions(track, sim);
    for (std::size_t k = 0; k < actions.size(); ++k) {
      const int step = track.start_step + static_cast<int>(k);
      Transition tr;
      tr.observation = build_observation(episode, track.agent_id, step);
      tr.action = bounds.normalize(actions[k]);
      tr.next_observation = build_observation(episode, track.agent_id, step + 1);
      tr.reward = feature_reward(weights, normalizer, extract_irl_features(episode, track.agent_id, step + 1));
      out.push_back(tr);
    }
  }
  return out;
}

OfflineTrainResult train_offline(std::span<const Transition> dataset, const Td3BcConfig& config,
                                 const ActionBounds& bounds, const ObservationScaler& scaler) {
  config.validate();
  if (dataset.empty()) throw UsageError("offline training needs at least one transition");
  ReplayBuffer buffer(dataset.size());
  for (const auto& t : dataset) buffer.push(t);

  OfflineTrainResult result;
  PolicyCheckpoint& ckpt = result.checkpoint;
  ckpt.algorithm = config.gradient_steps > 0 ? "td3bc" : "init";
  ckpt.networks = ActorCritic::random(config.hidden, bounds, config.seed);
  ckpt.scaler = scaler;
  ckpt.config = config.to_json();
  ckpt.seed = config.seed;

  Optimizers opt = Optimizers::make(ckpt.networks, config.learning_rate, config.learning_rate);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  for (long step = 0; step < config.gradient_steps; ++step) {
    const Batch batch = buffer.sample(batch_size, rng, scaler);
    result.losses.push_back(td3bc_update(ckpt.networks, opt, batch, config, step, rng));
  }
  ckpt.steps = config.gradient_steps;
  return result;
}

void OnlineTrainConfig::validate() const {
  sac.validate();
  if (env_steps < 0) throw UsageError("env_steps must be >= 0");
  if (warmup_steps < 0) throw UsageError("warmup_steps must be >= 0");
  if (updates_per_step < 0) throw UsageError("updates_per_step must be >= 0");
  if (log_every <= 0) throw UsageError("log_every must be positive");
  if (select_every < 0) throw UsageError("select_every must be >= 0");
}

nlohmann::json OnlineTrainConfig::to_json() const {
  return {{"sac", sac.to_json()},
          {"env_steps", env_steps},
          {"warmup_steps", warmup_steps},
          {"updates_per_step", updates_per_step},
          {"mode", mode == EpisodeMode::Kind::kSelfReplay ? "self-replay" : "log-replay"},
          {"reward", shaping.to_json()},
          {"log_every", log_every},
          {"select_every", select_every}};
}

OnlineTrainConfig OnlineTrainConfig::from_json(const nlohmann::json& doc) {
  OnlineTrainConfig c;
  const std::string p = "train";
  if (doc.contains("sac")) c.sac = SacConfig::from_json(doc.at("sac"));
  read_optional(doc, "env_steps", c.env_steps, p);
  read_optional(doc, "warmup_steps", c.warmup_steps, p);
  read_optional(doc, "updates_per_step", c.updates_per_step, p);
  read_optional(doc, "log_every", c.log_every, p);
  read_optional(doc, "select_every", c.select_every, p);
  if (doc.contains("mode")) {
    const auto m = doc.at("mode").get<std::string>();
    if (m == "self-replay") {
      c.mode = EpisodeMode::Kind::kSelfReplay;
    } else if (m == "log-replay") {
      c.mode = EpisodeMode::Kind::kLogReplay;
    } else {
      throw ParseError("train.mode", "expected self-replay or log-replay, got '" + m + "'");
    }
  }
  if (doc.contains("reward")) c.shaping = RewardShaping::from_json(doc.at("reward"));
  c.validate();
  return c;
}

namespace {

struct EpisodeStats {
  long agents = 0;
  long goal = 0;
  long off_road = 0;
  long collision = 0;
  double return_sum = 0.0;
};

}  // namespace

SelfReplayRates self_replay_rates(const GaussianPolicy& actor, const ObservationScaler& scaler,
                                  std::span<const Episode> episodes, const SimConfig& sim) {
  SelfReplayRates rates;
  if (episodes.empty()) return rates;
  const NeuralDrivingPolicy policy(actor, scaler, true);
  PolicySet policies;
  for (DrivingStyle s : kAllStyles) policies[s] = &policy;
  std::vector<std::vector<DrivingStyle>> styles;
  for (const auto& ep : episodes) styles.emplace_back(ep.tracks.size(), DrivingStyle::kNormal);
  SimConfig cfg = sim;
  cfg.delta_t = episodes.front().delta_t;
  long goal = 0, off_road = 0, collision = 0;
  for (const auto& r : run_episodes(episodes, EpisodeMode::self_replay(), policies, styles, cfg)) {
    rates.agents += r.agent_count;
    for (const auto& e : r.events) {
      if (e.kind == EventKind::kGoalReached) ++goal;
      if (e.kind == EventKind::kOffRoad) ++off_road;
      if (e.kind == EventKind::kCollision) ++collision;
    }
  }
  if (rates.agents > 0) {
    const auto n = static_cast<double>(rates.agents);
    rates.goal = static_cast<double>(goal) / n;
    rates.off_road = static_cast<double>(off_road) / n;
    rates.collision = static_cast<double>(collision) / n;
  }
  return rates;
}

OnlineTrainResult train_online_marl(std::span<const Episode> episodes, DrivingStyle style,
                                    const RewardWeights& weights, const FeatureNormalizer& normalizer,
                                    const SimConfig& sim, const OnlineTrainConfig& config,
                                    const ObservationScaler& scaler,
                                    const std::optional<PolicyCheckpoint>& warm_start) {
  config.validate();
  if (episodes.empty()) throw UsageError("online training needs at least one episode");
  const SacConfig& sac = config.sac;
  const ActionBounds bounds = ActionBounds::from_sim(sim);

  OnlineTrainResult result;
  PolicyCheckpoint& ckpt = result.checkpoint;
  ckpt.style = style;
  ckpt.algorithm = "sac";
  ckpt.scaler = scaler;
  ckpt.normalizer = normalizer;
  ckpt.seed = sac.seed;
  ckpt.config = config.to_json();
  ckpt.networks = ActorCritic::random(sac.hidden, bounds, sac.seed);
  if (warm_start) {
    require_same_shapes(ckpt.networks, warm_start->networks);
    ckpt.networks = warm_start->networks;
    ckpt.scaler = warm_start->scaler;
  }
  ActorCritic& net = ckpt.networks;
  Optimizers opt = Optimizers::make(net, sac.learning_rate, sac.learning_rate);
  ReplayBuffer buffer(sac.buffer_size);
  std::mt19937_64 rng(sac.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  const bool random_warmup = !warm_start.has_value();

  long steps = 0;
  long episode_count = 0;
  EpisodeStats window;
  double critic_acc = 0.0, actor_acc = 0.0;
  long loss_count = 0;
  std::vector<double> agent_return;

  auto flush_log = [&]() {
    OnlineLogEntry e;
    e.env_steps = steps;
    e.episodes = episode_count;
    if (window.agents > 0) {
      const auto n = static_cast<double>(window.agents);
      e.mean_agent_return = window.return_sum / n;
      e.goal_rate = static_cast<double>(window.goal) / n;
      e.off_road_rate = static_cast<double>(window.off_road) / n;
      e.collision_rate = static_cast<double>(window.collision) / n;
    }
    if (loss_count > 0) {
      e.critic_loss = critic_acc / static_cast<double>(loss_count);
      e.actor_loss = actor_acc / static_cast<double>(loss_count);
    }
    result.log.push_back(e);
    window = {};
    critic_acc = actor_acc = 0.0;
    loss_count = 0;
  };

  std::optional<ActorCritic> best;
  double best_score = -std::numeric_limits<double>::infinity();
  auto select = [&]() {
    const SelfReplayRates r = self_replay_rates(net.actor, ckpt.scaler, episodes, sim);
    result.selection.push_back({steps, r});
    if (r.score() > best_score) {
      best_score = r.score();
      best = net;
      result.selected_steps = steps;
    }
  };

  std::vector<std::size_t> order(episodes.size());
  std::size_t cursor = order.size();
  while (steps < config.env_steps) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const Episode& ep = episodes[order[cursor++]];
    if (ep.tracks.empty()) continue;
    EpisodeMode mode = EpisodeMode::self_replay();
    if (config.mode == EpisodeMode::Kind::kLogReplay) {
      std::uniform_int_distribution<std::size_t> pick(0, ep.tracks.size() - 1);
      mode = EpisodeMode::log_replay(ep.tracks[pick(rng)].agent_id);
    }
    SimConfig episode_sim = sim;
    episode_sim.delta_t = ep.delta_t;
    World world(ep, mode, std::vector<DrivingStyle>(ep.tracks.size(), style), episode_sim);
    agent_return.assign(ep.tracks.size(), 0.0);
    std::vector<bool> touched(ep.tracks.size(), false);

    while (!world.done() && steps < config.env_steps) {
      const auto acting = world.acting_agents();
      std::vector<Observation> obs(acting.size());
      std::vector<NormalizedAction> normalized(acting.size());
      std::vector<Action> actions(acting.size());
      if (!acting.empty()) {
        Eigen::MatrixXd batch(kObservationDim, static_cast<Eigen::Index>(acting.size()));
        for (std::size_t i = 0; i < acting.size(); ++i) {
          obs[i] = world.observation(acting[i]);
          ckpt.scaler.apply_into(obs[i], batch.col(static_cast<Eigen::Index>(i)));
        }
        const bool explore = random_warmup && steps < config.warmup_steps;
        Eigen::MatrixXd squashed;
        if (!explore) {
          const auto noise = standard_normal(kActionDim, batch.cols(), rng);
          squashed = net.actor.sample(batch, noise, false).squashed;
        }
        for (std::size_t i = 0; i < acting.size(); ++i) {
          for (int d = 0; d < kActionDim; ++d) {
            normalized[i][static_cast<std::size_t>(d)] =
                explore ? uniform(rng) : squashed(d, static_cast<Eigen::Index>(i));
          }
          actions[i] = bounds.to_action(normalized[i]);
        }
      }
      const auto outcomes = world.advance(actions);
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        Transition t;
        t.observation = obs[i];
        t.action = normalized[i];
        t.reward = config.shaping.feature_scale * feature_reward(weights, normalizer, o.raw_features) +
                   config.shaping.event_reward(o.event);
        t.next_observation = o.next_observation;
        t.terminal = o.event.has_value();
        buffer.push(t);
        agent_return[o.agent] += t.reward;
        touched[o.agent] = true;
      }
      ++steps;
      if (steps >= config.warmup_steps && buffer.size() >= static_cast<std::size_t>(sac.batch_size)) {
        for (int u = 0; u < config.updates_per_step; ++u) {
          const Batch b = buffer.sample(static_cast<std::size_t>(sac.batch_size), rng, ckpt.scaler);
          const SacLosses l = sac_update(net, opt, b, sac, rng);
          critic_acc += 0.5 * (l.critic1 + l.critic2);
          actor_acc += l.actor;
          ++loss_count;
        }
      }
      if (steps % config.log_every == 0) flush_log();
      if (config.select_every > 0 && steps >= config.warmup_steps && steps % config.select_every == 0) select();
    }

    ++episode_count;
    for (std::size_t a = 0; a < touched.size(); ++a) {
      if (!touched[a]) continue;
      ++window.agents;
      window.return_sum += agent_return[a];
    }
    for (const auto& e : world.events()) {
      const auto idx = ep.track_index(e.agent_id);
      if (!idx || !touched[*idx]) continue;
      if (e.kind == EventKind::kGoalReached) ++window.goal;
      if (e.kind == EventKind::kOffRoad) ++window.off_road;
      if (e.kind == EventKind::kCollision) ++window.collision;
    }
  }
  if (steps % config.log_every != 0 || result.log.empty()) flush_log();
  if (config.select_every > 0) {
    if (result.selection.empty() || result.selection.back().env_steps != steps) select();
    net = *best;
  } else {
    result.selected_steps = steps;
  }
  ckpt.steps = steps;
  return result;
}

}  // namespace drivestyle
