#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "drivestyle/eval.hpp"
#include "drivestyle/irl.hpp"
#include "drivestyle/learn/policy.hpp"
#include "drivestyle/sim.hpp"
#include "drivestyle/styles.hpp"
#include "drivestyle/synth.hpp"

namespace ds = drivestyle;

namespace {

const ds::SynthCorpus& corpus() {
  static const ds::SynthCorpus c = [] {
    ds::SynthConfig cfg;
    cfg.episodes = 16;
    cfg.seed = 7;
    return ds::generate_corpus(cfg);
  }();
  return c;
}

std::vector<ds::DemoCandidates> demo_set(int demos, int candidates) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<ds::DemoCandidates> out(static_cast<std::size_t>(demos));
  for (auto& d : out) {
    d.candidates.resize(static_cast<std::size_t>(candidates));
    for (auto& c : d.candidates) {
      for (auto& v : c) v = n(rng);
    }
    d.demo = d.candidates.front();
  }
  return out;
}

std::vector<ds::RatioPoint> ratio_points(std::size_t n) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ds::RatioPoint> pts(n);
  for (auto& p : pts) {
    double a = u(rng), b = u(rng) * (1.0 - a);
    p = {a, b, 1.0 - a - b};
  }
  return pts;
}

template <bool Parallel>
void BM_IrlGradient(benchmark::State& state) {
  const auto demos = demo_set(static_cast<int>(state.range(0)), 50);
  ds::IrlFeatureVector theta{};
  theta.fill(0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? ds::gradient(theta, demos) : ds::gradient_serial(theta, demos));
  }
}

template <bool Parallel>
void BM_RiskProfiles(benchmark::State& state) {
  const auto& ep = corpus().episodes.front();
  const ds::RiskThresholds th;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? ds::risk_profiles(ep, th) : ds::risk_profiles_serial(ep, th));
  }
}

template <bool Parallel>
void BM_KMeans(benchmark::State& state) {
  const auto pts = ratio_points(static_cast<std::size_t>(state.range(0)));
  ds::KMeansOptions opt;
  opt.k = 3;
  opt.restarts = 8;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? ds::kmeans_fit(pts, opt) : ds::kmeans_fit_serial(pts, opt));
  }
}

template <bool Parallel>
void BM_Silhouette(benchmark::State& state) {
  const auto pts = ratio_points(static_cast<std::size_t>(state.range(0)));
  std::vector<int> labels(pts.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? ds::silhouette(pts, labels, 3) : ds::silhouette_serial(pts, labels, 3));
  }
}

template <bool Parallel>
void BM_Rollouts(benchmark::State& state) {
  const auto& eps = corpus().episodes;
  std::mt19937_64 rng(5);
  const ds::SimConfig sim;
  const auto actor = ds::GaussianPolicy::random(ds::kObservationDim, {32, 32}, ds::ActionBounds::from_sim(sim), rng);
  const ds::NeuralDrivingPolicy policy(actor, ds::ObservationScaler::highway(), true);
  ds::PolicySet set;
  for (auto s : ds::kAllStyles) set[s] = &policy;
  std::vector<std::vector<ds::DrivingStyle>> styles;
  for (const auto& e : eps) styles.emplace_back(e.tracks.size(), ds::DrivingStyle::kNormal);
  ds::SimConfig cfg;
  cfg.max_steps = 100;
  const auto mode = ds::EpisodeMode::self_replay();
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? ds::run_episodes(eps, mode, set, styles, cfg)
                                      : ds::run_episodes_serial(eps, mode, set, styles, cfg));
  }
}

template <bool Parallel>
void BM_MetricSamples(benchmark::State& state) {
  const auto& eps = corpus().episodes;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? ds::scenario_metric_samples(eps) : ds::scenario_metric_samples_serial(eps));
  }
}

}  // namespace

BENCHMARK(BM_IrlGradient<false>)->Arg(2000);
BENCHMARK(BM_IrlGradient<true>)->Arg(2000);
BENCHMARK(BM_RiskProfiles<false>);
BENCHMARK(BM_RiskProfiles<true>);
BENCHMARK(BM_KMeans<false>)->Arg(5000);
BENCHMARK(BM_KMeans<true>)->Arg(5000);
BENCHMARK(BM_Silhouette<false>)->Arg(2000);
BENCHMARK(BM_Silhouette<true>)->Arg(2000);
BENCHMARK(BM_Rollouts<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Rollouts<true>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MetricSamples<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MetricSamples<true>)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
