#include "drivestyle/learn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "drivestyle/error.hpp"

namespace drivestyle {

namespace {

// log(1 - tanh(u)^2), stable for large |u|.
double log_one_minus_tanh_sq(double u) {
  const double a = std::abs(u);
  return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

NormalizedAction pair_from_json(const nlohmann::json& doc, const std::string& field) {
  if (!doc.is_array() || doc.size() != kActionDim) throw ParseError(field, "expected two numbers");
  return {doc[0].get<double>(), doc[1].get<double>()};
}

}  // namespace

ActionBounds ActionBounds::from_sim(const SimConfig& config) {
  return {{config.accel_min, config.steering_rate_min}, {config.accel_max, config.steering_rate_max}};
}

Action ActionBounds::to_action(const NormalizedAction& n) const {
  return {center(0) + half_range(0) * n[0], center(1) + half_range(1) * n[1]};
}

NormalizedAction ActionBounds::normalize(const Action& a) const {
  constexpr double kEdge = 1.0 - 1e-6;
  return {std::clamp((a.accel - center(0)) / half_range(0), -kEdge, kEdge),
          std::clamp((a.steering_rate - center(1)) / half_range(1), -kEdge, kEdge)};
}

nlohmann::json ActionBounds::to_json() const { return {{"low", low}, {"high", high}}; }

ActionBounds ActionBounds::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("low") || !doc.contains("high")) {
    throw ParseError("action_bounds", "expected {low, high}");
  }
  ActionBounds b{pair_from_json(doc.at("low"), "action_bounds.low"),
                 pair_from_json(doc.at("high"), "action_bounds.high")};
  for (int d = 0; d < kActionDim; ++d) {
    if (!(b.high[d] > b.low[d])) throw ParseError("action_bounds", "high must exceed low");
  }
  return b;
}

ObservationScaler ObservationScaler::highway() {
  ObservationScaler s;
  s.offset[0] = 25.0;
  s.scale[0] = 10.0;
  s.scale[1] = 0.05;
  s.offset[2] = s.offset[3] = 1.75;
  s.scale[2] = s.scale[3] = 1.75;
  for (int slot = 0; slot < kNeighborSlots; ++slot) {
    const int o = kEgoFeatures + slot * kNeighborFeatures;
    s.scale[o + 0] = 0.05;
    s.scale[o + 1] = 50.0;
    s.scale[o + 2] = 3.5;
    s.scale[o + 3] = 10.0;
    s.scale[o + 4] = 3.0;
  }
  return s;
}

Eigen::VectorXd ObservationScaler::apply(const Observation& obs) const {
  Eigen::VectorXd out(kObservationDim);
  apply_into(obs, out);
  return out;
}

void ObservationScaler::apply_into(const Observation& obs, Eigen::Ref<Eigen::VectorXd> out) const {
  for (int i = 0; i < kObservationDim; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out(i) = (obs.values[k] - offset[k]) / scale[k];
  }
}

nlohmann::json ObservationScaler::to_json() const { return {{"offset", offset}, {"scale", scale}}; }

ObservationScaler ObservationScaler::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("offset") || !doc.contains("scale")) {
    throw ParseError("observation_scaler", "expected {offset, scale}");
  }
  ObservationScaler s;
  const auto& off = doc.at("offset");
  const auto& sc = doc.at("scale");
  if (!off.is_array() || off.size() != kObservationDim || !sc.is_array() || sc.size() != kObservationDim) {
    throw ParseError("observation_scaler", "expected " + std::to_string(kObservationDim) + " entries");
  }
  for (std::size_t i = 0; i < kObservationDim; ++i) {
    s.offset[i] = off[i].get<double>();
    s.scale[i] = sc[i].get<double>();
    if (!(s.scale[i] > 0.0)) throw ParseError("observation_scaler.scale[" + std::to_string(i) + "]", "must be > 0");
  }
  return s;
}

GaussianPolicy::GaussianPolicy(Mlp trunk, ActionBounds bounds) : trunk_(std::move(trunk)), bounds_(bounds) {
  if (trunk_.output_dim() != 2 * kActionDim) {
    throw UsageError("policy trunk must output " + std::to_string(2 * kActionDim) + " values");
  }
}

GaussianPolicy GaussianPolicy::random(int obs_dim, const std::vector<int>& hidden, ActionBounds bounds,
                                      std::mt19937_64& rng) {
  std::vector<int> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(2 * kActionDim);
  return GaussianPolicy(Mlp::random(std::move(sizes), rng), bounds);
}

GaussianPolicy::Sample GaussianPolicy::sample(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& noise,
                                              bool deterministic) const {
  const Eigen::Index n = obs.cols();
  Sample s;
  const Eigen::MatrixXd out = trunk_.forward(obs, s.cache);
  if (deterministic) {
    s.noise = Eigen::MatrixXd::Zero(kActionDim, n);
  } else {
    if (noise.rows() != kActionDim || noise.cols() != n) throw UsageError("policy noise has the wrong shape");
    s.noise = noise;
  }
  const Eigen::MatrixXd mean = out.topRows(kActionDim);
  s.raw_log_std = out.bottomRows(kActionDim);
  const Eigen::MatrixXd log_std = s.raw_log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  s.std = log_std.array().exp().matrix();
  const Eigen::MatrixXd u = mean + s.std.cwiseProduct(s.noise);
  s.squashed = u.array().tanh().matrix();
  s.action.resize(kActionDim, n);
  s.log_prob = Eigen::VectorXd::Zero(n);
  double scale_term = 0.0;
  for (int d = 0; d < kActionDim; ++d) scale_term += std::log(bounds_.half_range(d));
  for (Eigen::Index j = 0; j < n; ++j) {
    double lp = -scale_term;
    for (int d = 0; d < kActionDim; ++d) {
      const double e = s.noise(d, j);
      lp += -0.5 * e * e - log_std(d, j) - 0.5 * std::log(2.0 * std::numbers::pi) - log_one_minus_tanh_sq(u(d, j));
      s.action(d, j) = bounds_.center(d) + bounds_.half_range(d) * s.squashed(d, j);
    }
    s.log_prob(j) = lp;
  }
  return s;
}

void GaussianPolicy::backward(const Sample& s, const Eigen::MatrixXd& d_squashed, const Eigen::VectorXd& d_log_prob,
                              Eigen::VectorXd& grad) const {
  const Eigen::Index n = s.squashed.cols();
  if (d_squashed.rows() != kActionDim || d_squashed.cols() != n || d_log_prob.size() != n) {
    throw UsageError("policy upstream gradient has the wrong shape");
  }
  Eigen::MatrixXd upstream(2 * kActionDim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int d = 0; d < kActionDim; ++d) {
      const double t = s.squashed(d, j);
      const double du = d_squashed(d, j) * (1.0 - t * t) + d_log_prob(j) * 2.0 * t;
      upstream(d, j) = du;
      const double raw = s.raw_log_std(d, j);
      const bool clamped = raw < kLogStdMin || raw > kLogStdMax;
      upstream(kActionDim + d, j) = clamped ? 0.0 : du * s.std(d, j) * s.noise(d, j) - d_log_prob(j);
    }
  }
  trunk_.backward(s.cache, upstream, &grad);
}

ActorCritic ActorCritic::random(const std::vector<int>& hidden, ActionBounds bounds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ActorCritic net;
  net.actor = GaussianPolicy::random(kObservationDim, hidden, bounds, rng);
  std::vector<int> critic_sizes{kObservationDim + kActionDim};
  critic_sizes.insert(critic_sizes.end(), hidden.begin(), hidden.end());
  critic_sizes.push_back(1);
  net.q1 = Mlp::random(critic_sizes, rng);
  net.q2 = Mlp::random(critic_sizes, rng);
  net.actor_target = net.actor;
  net.q1_target = net.q1;
  net.q2_target = net.q2;
  return net;
}

Eigen::MatrixXd critic_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) {
  if (obs.cols() != actions.cols()) throw UsageError("observation and action batches differ in size");
  Eigen::MatrixXd in(obs.rows() + actions.rows(), obs.cols());
  in.topRows(obs.rows()) = obs;
  in.bottomRows(actions.rows()) = actions;
  return in;
}

NeuralDrivingPolicy::NeuralDrivingPolicy(const GaussianPolicy& actor, const ObservationScaler& scaler,
                                         bool deterministic)
    : actor_(&actor), scaler_(scaler), deterministic_(deterministic) {}

Action NeuralDrivingPolicy::act(const PolicyInput& input, std::mt19937_64& rng) const {
  const Eigen::MatrixXd obs = scaler_.apply(input.observation);
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(kActionDim, 1);
  if (!deterministic_) {
    std::normal_distribution<double> normal;
    for (int d = 0; d < kActionDim; ++d) noise(d, 0) = normal(rng);
  }
  const auto s = actor_->sample(obs, noise, deterministic_);
  return {s.action(0, 0), s.action(1, 0)};
}

}  // namespace drivestyle
