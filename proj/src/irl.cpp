#include "drivestyle/irl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "drivestyle/error.hpp"

namespace drivestyle {

nlohmann::json RewardWeights::to_json() const {
  nlohmann::json theta_doc = nlohmann::json::object();
  for (std::size_t i = 0; i < theta.size(); ++i) theta_doc[std::string(kIrlFeatureNames[i])] = theta[i];
  return {{"style", style ? std::string(style_name(*style)) : std::string("unlabeled")}, {"theta", theta_doc}};
}

RewardWeights RewardWeights::from_json(const nlohmann::json& doc) {
  RewardWeights w;
  if (!doc.contains("style") || !doc.contains("theta")) throw ParseError("reward_weights", "missing style/theta");
  w.style = parse_style(doc.at("style").get<std::string>());
  const auto& theta = doc.at("theta");
  for (std::size_t i = 0; i < w.theta.size(); ++i) {
    const std::string name(kIrlFeatureNames[i]);
    if (!theta.contains(name) || !theta.at(name).is_number()) {
      throw ParseError("reward_weights.theta." + name, "missing or not a number");
    }
    w.theta[i] = theta.at(name).get<double>();
  }
  return w;
}

double trajectory_reward(std::span<const double> theta, std::span<const double> features) {
  if (theta.size() != features.size()) {
    throw UsageError("reward dimension mismatch: theta has " + std::to_string(theta.size()) + ", features have " +
                     std::to_string(features.size()));
  }
  return std::inner_product(theta.begin(), theta.end(), features.begin(), 0.0);
}

double trajectory_reward(const IrlFeatureVector& theta, const IrlFeatureVector& features) {
  return trajectory_reward(std::span<const double>(theta), std::span<const double>(features));
}

namespace {

struct DemoTerm {
  double log_likelihood = 0.0;
  IrlFeatureVector gradient{};
};

DemoTerm demo_term(const IrlFeatureVector& theta, const DemoCandidates& demo) {
  DemoTerm term;
  const auto& cands = demo.candidates;
  std::vector<double> rewards(cands.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cands.size(); ++i) {
    rewards[i] = trajectory_reward(theta, cands[i]);
    top = std::max(top, rewards[i]);
  }
  double z = 0.0;
  for (double& r : rewards) {
    r = std::exp(r - top);
    z += r;
  }
  term.log_likelihood = trajectory_reward(theta, demo.demo) - (top + std::log(z));
  term.gradient = demo.demo;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double p = rewards[i] / z;
    for (std::size_t f = 0; f < term.gradient.size(); ++f) term.gradient[f] -= p * cands[i][f];
  }
  return term;
}

void check_demos(std::span<const DemoCandidates> demos) {
  if (demos.empty()) throw UsageError("IRL needs at least one demonstration");
  for (const auto& d : demos) {
    if (d.candidates.empty()) throw UsageError("demonstration without candidates");
  }
}

std::vector<DemoTerm> demo_terms(const IrlFeatureVector& theta, std::span<const DemoCandidates> demos) {
  const auto n = static_cast<std::ptrdiff_t>(demos.size());
  std::vector<DemoTerm> terms(demos.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    terms[static_cast<std::size_t>(i)] = demo_term(theta, demos[static_cast<std::size_t>(i)]);
  }
  return terms;
}

double norm(const IrlFeatureVector& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

}  // namespace

std::vector<double> candidate_probabilities(const IrlFeatureVector& theta,
                                            std::span<const IrlFeatureVector> candidates) {
  std::vector<double> p(candidates.size());
  if (candidates.empty()) return p;
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    p[i] = trajectory_reward(theta, candidates[i]);
    top = std::max(top, p[i]);
  }
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - top);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

double log_likelihood(const IrlFeatureVector& theta, std::span<const DemoCandidates> demos) {
  check_demos(demos);
  double total = 0.0;
  for (const auto& t : demo_terms(theta, demos)) total += t.log_likelihood;
  return total;
}

double log_likelihood_serial(const IrlFeatureVector& theta, std::span<const DemoCandidates> demos) {
  check_demos(demos);
  double total = 0.0;
  for (const auto& d : demos) total += demo_term(theta, d).log_likelihood;
  return total;
}

IrlFeatureVector gradient(const IrlFeatureVector& theta, std::span<const DemoCandidates> demos) {
  check_demos(demos);
  IrlFeatureVector g{};
  for (const auto& t : demo_terms(theta, demos)) {
    for (std::size_t f = 0; f < g.size(); ++f) g[f] += t.gradient[f];
  }
  return g;
}

IrlFeatureVector gradient_serial(const IrlFeatureVector& theta, std::span<const DemoCandidates> demos) {
  check_demos(demos);
  IrlFeatureVector g{};
  for (const auto& d : demos) {
    const auto t = demo_term(theta, d);
    for (std::size_t f = 0; f < g.size(); ++f) g[f] += t.gradient[f];
  }
  return g;
}

IrlFitResult fit(const std::function<std::vector<DemoCandidates>(int)>& source, const IrlConfig& config) {
  if (config.iterations < 1) throw UsageError("IRL needs at least one iteration");
  if (!(config.learning_rate > 0.0)) throw UsageError("IRL learning rate must be positive");
  IrlFitResult result;
  IrlFeatureVector theta{};
  std::vector<DemoCandidates> demos = source(0);
  check_demos(demos);
  for (int it = 0; it < config.iterations; ++it) {
    if (config.resample_each_iteration && it > 0) demos = source(it);
    double ll = 0.0;
    IrlFeatureVector g{};
    for (const auto& t : demo_terms(theta, demos)) {
      ll += t.log_likelihood;
      for (std::size_t f = 0; f < g.size(); ++f) g[f] += t.gradient[f];
    }
    const double gn = norm(g);
    result.log.push_back({ll, gn, theta});
    double scale = config.learning_rate;
    if (config.gradient_clip > 0.0 && gn > config.gradient_clip) scale *= config.gradient_clip / gn;
    for (std::size_t f = 0; f < theta.size(); ++f) theta[f] += scale * g[f];
    if (!std::all_of(theta.begin(), theta.end(), [](double v) { return std::isfinite(v); })) {
      throw NumericError("IRL weights diverged at iteration " + std::to_string(it));
    }
  }
  result.weights.theta = theta;
  return result;
}

IrlFitResult fit(std::span<const DemoCandidates> demos, const IrlConfig& config) {
  check_demos(demos);
  IrlConfig frozen = config;
  frozen.resample_each_iteration = false;
  const std::vector<DemoCandidates> copy(demos.begin(), demos.end());
  return fit([&copy](int) { return copy; }, frozen);
}

// ---------------------------------------------------------------------------

std::vector<DemoWindow> demo_windows(const Episode& episode, std::span<const std::size_t> tracks, int steps) {
  if (steps < 1) throw UsageError("demo window needs at least one step");
  std::vector<DemoWindow> out;
  for (std::size_t t : tracks) {
    const auto& track = episode.tracks.at(t);
    const int n = static_cast<int>(track.states.size());
    for (int off = 0; off + steps <= n; off += steps) {
      out.push_back({&episode, t, track.start_step + off, steps});
    }
  }
  return out;
}

namespace {

std::vector<AgentState> demo_states(const DemoWindow& w) {
  const auto& track = w.episode->tracks[w.track];
  const auto first = track.states.begin() + (w.start_step - track.start_step);
  return {first, first + w.steps};
}

}  // namespace

std::vector<DemoCandidates> build_demo_set(std::span<const DemoWindow> windows, const CandidateGrid& grid,
                                           const FeatureNormalizer& normalizer, std::uint64_t seed) {
  const auto n = static_cast<std::ptrdiff_t>(windows.size());
  std::vector<DemoCandidates> out(windows.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const DemoWindow& w = windows[static_cast<std::size_t>(i)];
    const ReplayContext ctx{w.episode, w.track, w.start_step, w.steps};
    const auto states = demo_states(w);
    DemoCandidates dc;
    dc.demo = accumulate_features(states, ctx, normalizer).sum;
    dc.candidates.push_back(dc.demo);
    const auto cands = sample_candidates(states.front(), w.episode->layout, grid, w.episode->delta_t,
                                         seed + static_cast<std::uint64_t>(i));
    for (const auto& c : cands) dc.candidates.push_back(candidate_features(c, ctx, normalizer).sum);
    out[static_cast<std::size_t>(i)] = std::move(dc);
  }
  return out;
}

std::vector<IrlFeatureVector> raw_feature_corpus(std::span<const DemoWindow> windows) {
  std::vector<IrlFeatureVector> out;
  std::vector<AgentState> scene;
  for (const auto& w : windows) {
    const Episode& ep = *w.episode;
    const auto states = demo_states(w);
    for (int k = 0; k < w.steps; ++k) {
      const int step = w.start_step + k;
      scene.clear();
      for (std::size_t i = 0; i < ep.tracks.size(); ++i) {
        if (i != w.track && ep.tracks[i].alive_at(step)) scene.push_back(ep.tracks[i].at(step));
      }
      scene.push_back(states[static_cast<std::size_t>(k)]);
      const AgentState* prev = k > 0 ? &states[static_cast<std::size_t>(k - 1)] : nullptr;
      out.push_back(irl_features(scene, scene.size() - 1, prev, ep.layout, ep.delta_t));
    }
  }
  return out;
}

}  // namespace drivestyle
