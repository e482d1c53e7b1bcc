#include "drivestyle/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "drivestyle/error.hpp"
#include "drivestyle/json_fields.hpp"
#include "drivestyle/learn/checkpoint.hpp"
#include "drivestyle/learn/policy.hpp"

namespace drivestyle {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <class T>
void seed_or_global(const json& section, T& seed, std::uint64_t global) {
  if (!section.is_object() || !section.contains("seed")) seed = global;
}

json section(const json& doc, const char* key) {
  if (!doc.contains(key)) return json::object();
  const auto& s = doc.at(key);
  if (!s.is_object()) throw ParseError(key, "expected an object");
  return s;
}

std::vector<fs::path> path_list(const json& doc, const char* key, const std::string& field) {
  std::vector<std::string> raw;
  read_optional(doc, key, raw, field);
  return {raw.begin(), raw.end()};
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("config", "expected an object");
  PipelineConfig c;
  c.source = doc;
  read_optional(doc, "seed", c.seed, "");
  std::string out = c.output_dir.string();
  read_optional(doc, "output_dir", out, "");
  c.output_dir = out;

  const json data = section(doc, "data");
  c.train_episodes = path_list(data, "train", "data");
  c.test_episodes = path_list(data, "test", "data");

  const json synth = section(doc, "synth");
  c.synth = SynthConfig::from_json(synth);
  seed_or_global(synth, c.synth.seed, c.seed);
  read_optional(synth, "test_episodes", c.synth_test_episodes, "synth");
  if (c.synth_test_episodes < 1 || c.synth_test_episodes >= c.synth.episodes) {
    throw UsageError("synth.test_episodes must be in [1, episodes)");
  }

  const json risk = section(doc, "risk");
  read_optional(risk, "thw", c.risk.thw, "risk");
  read_optional(risk, "ittc", c.risk.ittc, "risk");

  const json cluster = section(doc, "cluster");
  read_optional(cluster, "k", c.kmeans.k, "cluster");
  read_optional(cluster, "restarts", c.kmeans.restarts, "cluster");
  read_optional(cluster, "max_iters", c.kmeans.max_iters, "cluster");
  read_optional(cluster, "tolerance", c.kmeans.tolerance, "cluster");
  read_optional(cluster, "seed", c.kmeans.seed, "cluster");
  seed_or_global(cluster, c.kmeans.seed, c.seed);
  if (c.kmeans.k < 1 || c.kmeans.restarts < 1 || c.kmeans.max_iters < 1) {
    throw UsageError("cluster.k, restarts and max_iters must be >= 1");
  }

  const json planner = section(doc, "planner");
  read_optional(planner, "lane_offsets", c.irl.grid.lane_offsets, "planner");
  read_optional(planner, "speed_factors", c.irl.grid.speed_factors, "planner");
  read_optional(planner, "horizons", c.irl.grid.horizons, "planner");
  read_optional(planner, "min_speed", c.irl.grid.min_speed, "planner");
  read_optional(planner, "max_speed", c.irl.grid.max_speed, "planner");
  read_optional(planner, "max_candidates", c.irl.grid.max_candidates, "planner");

  const json irl = section(doc, "irl");
  read_optional(irl, "learning_rate", c.irl.irl.learning_rate, "irl");
  read_optional(irl, "iterations", c.irl.irl.iterations, "irl");
  read_optional(irl, "gradient_clip", c.irl.irl.gradient_clip, "irl");
  read_optional(irl, "seed", c.irl.irl.seed, "irl");
  read_optional(irl, "resample_each_iteration", c.irl.irl.resample_each_iteration, "irl");
  read_optional(irl, "window_steps", c.irl.window_steps, "irl");
  read_optional(irl, "max_demos", c.irl.max_demos, "irl");
  seed_or_global(irl, c.irl.irl.seed, c.seed);
  if (!(c.irl.irl.learning_rate > 0.0) || c.irl.irl.iterations < 1 || c.irl.irl.gradient_clip < 0.0 ||
      c.irl.window_steps < 2 || c.irl.max_demos < 0) {
    throw UsageError("irl settings out of range");
  }

  const json td3bc = section(doc, "td3bc");
  c.td3bc = Td3BcConfig::from_json(td3bc);
  seed_or_global(td3bc, c.td3bc.seed, c.seed);

  const json train = section(doc, "train");
  c.train = OnlineTrainConfig::from_json(train);
  seed_or_global(train.contains("sac") ? train.at("sac") : json::object(), c.train.sac.seed, c.seed);

  const json sim = section(doc, "sim");
  read_optional(sim, "max_steps", c.sim.max_steps, "sim");
  read_optional(sim, "wheelbase", c.sim.wheelbase, "sim");
  read_optional(sim, "accel_min", c.sim.accel_min, "sim");
  read_optional(sim, "accel_max", c.sim.accel_max, "sim");
  read_optional(sim, "steering_rate_min", c.sim.steering_rate_min, "sim");
  read_optional(sim, "steering_rate_max", c.sim.steering_rate_max, "sim");
  read_optional(sim, "max_steering_angle", c.sim.max_steering_angle, "sim");
  read_optional(sim, "seed", c.sim.seed, "sim");
  seed_or_global(sim, c.sim.seed, c.seed);
  if (sim.contains("idm")) {
    const json& idm = sim.at("idm");
    read_optional(idm, "desired_speed", c.sim.idm.desired_speed, "sim.idm");
    read_optional(idm, "time_headway", c.sim.idm.time_headway, "sim.idm");
    read_optional(idm, "min_gap", c.sim.idm.min_gap, "sim.idm");
    read_optional(idm, "max_accel", c.sim.idm.max_accel, "sim.idm");
    read_optional(idm, "comfortable_decel", c.sim.idm.comfortable_decel, "sim.idm");
    read_optional(idm, "exponent", c.sim.idm.exponent, "sim.idm");
  }
  if (c.sim.max_steps < 1 || !(c.sim.wheelbase > 0.0) || !(c.sim.accel_max > c.sim.accel_min) ||
      !(c.sim.steering_rate_max > c.sim.steering_rate_min)) {
    throw UsageError("sim settings out of range");
  }

  read_optional(doc, "mix", c.mix.proportions, "");
  c.mix.validate();

  const json simulate = section(doc, "simulate");
  read_optional(simulate, "deterministic", c.deterministic_policies, "simulate");

  const json evaluation = section(doc, "evaluation");
  if (evaluation.contains("edges")) c.edges = MetricEdges::from_json(evaluation.at("edges"));
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": malformed JSON: " + e.what());
  }
  return from_json(doc);
}

nlohmann::json PipelineConfig::to_json() const { return source; }

std::string PipelineConfig::hash() const { return digest_bytes(source.dump()); }

std::string digest_bytes(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string digest_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return digest_bytes(os.str());
}

// ---------------------------------------------------------------------------
// Artifacts

fs::path ArtifactPaths::weights(DrivingStyle s) const {
  return root / "irl" / (std::string(style_name(s)) + ".json");
}
fs::path ArtifactPaths::irl_log(DrivingStyle s) const {
  return root / "irl" / (std::string(style_name(s)) + "_log.csv");
}
fs::path ArtifactPaths::pretrain_checkpoint(DrivingStyle s) const {
  return root / "checkpoints" / (std::string(style_name(s)) + "_td3bc.json");
}
fs::path ArtifactPaths::train_checkpoint(DrivingStyle s) const {
  return root / "checkpoints" / (std::string(style_name(s)) + "_sac.json");
}
fs::path ArtifactPaths::train_log(DrivingStyle s) const {
  return root / "train" / (std::string(style_name(s)) + "_log.csv");
}
fs::path ArtifactPaths::selection_log(DrivingStyle s) const {
  return root / "train" / (std::string(style_name(s)) + "_selection.csv");
}
fs::path ArtifactPaths::manifest(std::string_view stage) const {
  return root / "manifests" / (std::string(stage) + ".json");
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(1) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing artifact " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
}

void write_manifest(const PipelineConfig& config, std::string_view stage, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs, const json& extra = json::object()) {
  const ArtifactPaths paths{config.output_dir};
  json in = json::object(), out = json::object();
  for (const auto& p : inputs) in[p.string()] = digest_file(p);
  for (const auto& p : outputs) out[p.string()] = digest_file(p);
  json doc = {{"stage", stage}, {"config_hash", config.hash()}, {"seed", config.seed},
              {"inputs", in},   {"outputs", out}};
  for (const auto& [k, v] : extra.items()) doc[k] = v;
  write_json(paths.manifest(stage), doc);
}

std::string agent_key(const Episode& ep, const AgentTrack& t) { return ep.id + "/" + t.agent_id; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

DatasetIndex load_dataset_index(const ArtifactPaths& paths) {
  const json doc = read_json(paths.dataset());
  DatasetIndex idx;
  for (const auto& p : doc.at("train")) idx.train.emplace_back(p.get<std::string>());
  for (const auto& p : doc.at("test")) idx.test.emplace_back(p.get<std::string>());
  return idx;
}

std::vector<Episode> load_episodes(const std::vector<fs::path>& files) {
  std::vector<Episode> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_episode(f));
  return out;
}

// ---------------------------------------------------------------------------
// Stages

void stage_synth(const PipelineConfig& config, std::ostream& log) {
  const ArtifactPaths paths{config.output_dir};
  const SynthCorpus corpus = generate_corpus(config.synth);
  json train = json::array(), test = json::array();
  std::vector<fs::path> outputs;
  const auto n_train = corpus.episodes.size() - static_cast<std::size_t>(config.synth_test_episodes);
  for (std::size_t i = 0; i < corpus.episodes.size(); ++i) {
    const auto& ep = corpus.episodes[i];
    const fs::path file = paths.root / "synth" / "episodes" / (ep.id + ".json");
    save_episode(ep, file);
    (i < n_train ? train : test).push_back(file.string());
    outputs.push_back(file);
  }
  write_json(paths.synth_labels(), synth_labels_to_json(corpus.labels));
  write_json(paths.dataset(), {{"train", train}, {"test", test}});
  outputs.push_back(paths.synth_labels());
  outputs.push_back(paths.dataset());
  write_manifest(config, "synth", {}, outputs);
  log << "synth: " << corpus.episodes.size() << " episodes (" << n_train << " train, " << config.synth_test_episodes
      << " test), " << corpus.labels.size() << " agents\n";
}

void stage_ingest(const PipelineConfig& config, std::ostream& log) {
  if (config.train_episodes.empty() || config.test_episodes.empty()) {
    throw UsageError("ingest needs data.train and data.test episode lists");
  }
  const ArtifactPaths paths{config.output_dir};
  json train = json::array(), test = json::array();
  std::vector<fs::path> inputs;
  std::set<std::string> ids;
  auto take = [&](const std::vector<fs::path>& files, json& list) {
    for (const auto& f : files) {
      const Episode ep = load_episode(f);
      if (!ids.insert(ep.id).second) throw DataError("duplicate episode id '" + ep.id + "' in " + f.string());
      list.push_back(fs::absolute(f).string());
      inputs.push_back(f);
    }
  };
  take(config.train_episodes, train);
  take(config.test_episodes, test);
  write_json(paths.dataset(), {{"train", train}, {"test", test}});
  write_manifest(config, "ingest", inputs, {paths.dataset()});
  log << "ingest: " << train.size() << " train and " << test.size() << " test episodes validated\n";
}

double best_matching_agreement(std::span<const int> clusters, std::span<const DrivingStyle> truth, int k) {
  if (clusters.size() != truth.size()) throw UsageError("cluster and label lists differ in length");
  if (clusters.empty()) return 0.0;
  std::vector<std::array<int, kStyleCount>> counts(static_cast<std::size_t>(k), std::array<int, kStyleCount>{});
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    ++counts.at(static_cast<std::size_t>(clusters[i]))[static_cast<std::size_t>(truth[i])];
  }
  int best = 0;
  if (k <= kStyleCount) {
    std::array<int, kStyleCount> perm{0, 1, 2};
    do {
      int hit = 0;
      for (int c = 0; c < k; ++c) hit += counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(perm[c])];
      best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    for (const auto& row : counts) best += *std::max_element(row.begin(), row.end());
  }
  return static_cast<double>(best) / static_cast<double>(clusters.size());
}

ClusterSummary stage_cluster(const PipelineConfig& config, std::ostream& log) {
  const ArtifactPaths paths{config.output_dir};
  const DatasetIndex index = load_dataset_index(paths);
  const auto episodes = load_episodes(index.train);
  std::vector<RatioPoint> points;
  std::vector<std::string> keys;
  for (const auto& ep : episodes) {
    const auto profiles = risk_profiles(ep, config.risk);
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      points.push_back(profiles[i].ratios);
      keys.push_back(agent_key(ep, ep.tracks[i]));
    }
  }
  ClusterSummary summary;
  summary.model = kmeans_fit(points, config.kmeans);
  if (config.kmeans.k >= 2) {
    try {
      summary.validity = validity_indices(points, summary.model.assignments, config.kmeans.k);
    } catch (const UsageError& e) {
      log << "cluster: validity indices unavailable: " << e.what() << "\n";
    }
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int c = summary.model.assignments[i];
    summary.assignments.push_back({keys[i], c, summary.model.style_labels[static_cast<std::size_t>(c)], points[i]});
  }

  std::vector<fs::path> inputs = index.train;
  if (fs::exists(paths.synth_labels())) {
    const auto labels = synth_labels_from_json(read_json(paths.synth_labels()));
    std::map<std::string, DrivingStyle> by_key;
    for (const auto& l : labels) by_key[l.agent_key] = l.style;
    std::vector<DrivingStyle> truth;
    bool complete = true;
    for (const auto& k : keys) {
      const auto it = by_key.find(k);
      if (it == by_key.end()) {
        complete = false;
        break;
      }
      truth.push_back(it->second);
    }
    if (complete) {
      summary.label_agreement = best_matching_agreement(summary.model.assignments, truth, config.kmeans.k);
      inputs.push_back(paths.synth_labels());
    }
  }

  json report;
  report["k"] = config.kmeans.k;
  report["agents"] = points.size();
  report["centroids"] = summary.model.centroids;
  report["inertia"] = summary.model.inertia;
  json labels = json::array();
  std::map<std::string, int> counts;
  for (const auto& l : summary.model.style_labels) labels.push_back(l ? json(std::string(style_name(*l))) : json());
  for (const auto& a : summary.assignments) {
    if (a.style) ++counts[std::string(style_name(*a.style))];
  }
  report["cluster_styles"] = labels;
  report["style_counts"] = counts;
  if (summary.validity) {
    report["validity"] = {{"silhouette", summary.validity->silhouette},
                          {"davies_bouldin", summary.validity->davies_bouldin},
                          {"calinski_harabasz", summary.validity->calinski_harabasz}};
  } else {
    report["validity"] = "unavailable";
  }
  report["label_agreement"] = summary.label_agreement ? json(*summary.label_agreement) : json();
  write_json(paths.assignments(), style_assignments_to_json(summary.assignments));
  write_json(paths.cluster_report(), report);
  write_manifest(config, "cluster", inputs, {paths.assignments(), paths.cluster_report()});

  log << "cluster: " << points.size() << " agents, k=" << config.kmeans.k << ", inertia " << summary.model.inertia;
  if (summary.validity) {
    log << ", silhouette " << summary.validity->silhouette << ", DB " << summary.validity->davies_bouldin << ", CH "
        << summary.validity->calinski_harabasz;
  }
  if (summary.label_agreement) log << ", agreement with generator labels " << *summary.label_agreement;
  log << "\n";
  return summary;
}

namespace {

/// Track indices per episode for agents assigned to `style`.
std::vector<std::vector<std::size_t>> tracks_of_style(const std::vector<Episode>& episodes,
                                                      const std::vector<StyleAssignment>& assignments,
                                                      DrivingStyle style) {
  std::set<std::string> keys;
  for (const auto& a : assignments) {
    if (a.style == style) keys.insert(a.agent_key);
  }
  std::vector<std::vector<std::size_t>> out(episodes.size());
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (std::size_t t = 0; t < episodes[e].tracks.size(); ++t) {
      if (keys.count(agent_key(episodes[e], episodes[e].tracks[t]))) out[e].push_back(t);
    }
  }
  return out;
}

FeatureNormalizer shared_normalizer(const PipelineConfig& config, const std::vector<Episode>& episodes) {
  std::vector<DemoWindow> all;
  for (const auto& ep : episodes) {
    std::vector<std::size_t> every(ep.tracks.size());
    std::iota(every.begin(), every.end(), 0);
    const auto w = demo_windows(ep, every, config.irl.window_steps);
    all.insert(all.end(), w.begin(), w.end());
  }
  const auto corpus = raw_feature_corpus(all);
  return FeatureNormalizer::fit(corpus);
}

struct StyleInputs {
  DatasetIndex index;
  std::vector<Episode> episodes;
  std::vector<StyleAssignment> assignments;
};

StyleInputs load_style_inputs(const ArtifactPaths& paths) {
  StyleInputs in;
  in.index = load_dataset_index(paths);
  in.episodes = load_episodes(in.index.train);
  in.assignments = style_assignments_from_json(read_json(paths.assignments()));
  return in;
}

}  // namespace

bool stage_irl(const PipelineConfig& config, DrivingStyle style, std::ostream& log) {
  const ArtifactPaths paths{config.output_dir};
  const StyleInputs in = load_style_inputs(paths);
  const FeatureNormalizer normalizer = shared_normalizer(config, in.episodes);
  write_json(paths.normalizer(), normalizer.to_json());

  const auto tracks = tracks_of_style(in.episodes, in.assignments, style);
  std::vector<DemoWindow> windows;
  for (std::size_t e = 0; e < in.episodes.size(); ++e) {
    const auto w = demo_windows(in.episodes[e], tracks[e], config.irl.window_steps);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  const std::string name(style_name(style));
  if (windows.empty()) {
    log << "irl: warning: no " << name << " demonstrations, stage skipped for this style\n";
    return false;
  }
  if (config.irl.max_demos > 0 && windows.size() > static_cast<std::size_t>(config.irl.max_demos)) {
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(config.irl.irl.seed, static_cast<std::uint64_t>(style) + 1));
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(config.irl.max_demos));
    std::sort(order.begin(), order.end());
    std::vector<DemoWindow> subset;
    for (std::size_t i : order) subset.push_back(windows[i]);
    windows = std::move(subset);
  }
  const auto demos = build_demo_set(windows, config.irl.grid, normalizer, config.irl.irl.seed);
  IrlFitResult result = fit(demos, config.irl.irl);
  result.weights.style = style;

  write_json(paths.weights(style), result.weights.to_json());
  std::ostringstream csv;
  csv.precision(17);
  csv << "iteration,log_likelihood,gradient_norm\n";
  for (std::size_t i = 0; i < result.log.size(); ++i) {
    csv << i << ',' << result.log[i].log_likelihood << ',' << result.log[i].gradient_norm << '\n';
  }
  write_text(paths.irl_log(style), csv.str());
  std::vector<fs::path> inputs = in.index.train;
  inputs.push_back(paths.assignments());
  write_manifest(config, "irl_" + name, inputs, {paths.normalizer(), paths.weights(style), paths.irl_log(style)});
  log << "irl: " << name << " fitted on " << demos.size() << " demonstrations, final log-likelihood "
      << (result.log.empty() ? 0.0 : result.log.back().log_likelihood) << "\n";
  return true;
}

namespace {

DrivingStyle require_style(const StageOptions& options, const char* stage) {
  if (!options.style) throw UsageError(std::string(stage) + " needs a style");
  return *options.style;
}

RewardWeights load_weights(const ArtifactPaths& paths, DrivingStyle style) {
  const fs::path p = paths.weights(style);
  if (!fs::exists(p)) throw DataError("missing reward weights " + p.string() + " (run the irl stage first)");
  return RewardWeights::from_json(read_json(p));
}

}  // namespace

void stage_pretrain(const PipelineConfig& config, const StageOptions& options, std::ostream& log) {
  const DrivingStyle style = require_style(options, "pretrain");
  const ArtifactPaths paths{config.output_dir};
  const RewardWeights weights = load_weights(paths, style);
  const FeatureNormalizer normalizer = FeatureNormalizer::from_json(read_json(paths.normalizer()));
  const StyleInputs in = load_style_inputs(paths);
  const auto tracks = tracks_of_style(in.episodes, in.assignments, style);
  std::vector<Transition> dataset;
  for (std::size_t e = 0; e < in.episodes.size(); ++e) {
    SimConfig sim = config.sim;
    sim.delta_t = in.episodes[e].delta_t;
    const auto t = offline_transitions(in.episodes[e], tracks[e], weights, normalizer, sim);
    dataset.insert(dataset.end(), t.begin(), t.end());
  }
  if (dataset.empty()) throw DataError("no " + std::string(style_name(style)) + " transitions to pretrain on");
  Td3BcConfig td3 = config.td3bc;
  if (options.steps) td3.gradient_steps = static_cast<int>(*options.steps);
  OfflineTrainResult result =
      train_offline(dataset, td3, ActionBounds::from_sim(config.sim), ObservationScaler::highway());
  result.checkpoint.style = style;
  result.checkpoint.normalizer = normalizer;
  save_checkpoint(result.checkpoint, paths.pretrain_checkpoint(style));
  write_manifest(config, "pretrain_" + std::string(style_name(style)),
                 {paths.weights(style), paths.normalizer(), paths.assignments()}, {paths.pretrain_checkpoint(style)});
  log << "pretrain: " << style_name(style) << " TD3+BC on " << dataset.size() << " transitions, "
      << td3.gradient_steps << " gradient steps\n";
}

void stage_train(const PipelineConfig& config, const StageOptions& options, std::ostream& log) {
  const DrivingStyle style = require_style(options, "train");
  const ArtifactPaths paths{config.output_dir};
  const RewardWeights weights = load_weights(paths, style);
  const FeatureNormalizer normalizer = FeatureNormalizer::from_json(read_json(paths.normalizer()));
  const DatasetIndex index = load_dataset_index(paths);
  const auto episodes = load_episodes(index.train);
  OnlineTrainConfig train = config.train;
  if (options.steps) train.env_steps = *options.steps;
  if (options.mode) train.mode = *options.mode;
  std::optional<PolicyCheckpoint> warm;
  std::vector<fs::path> inputs{paths.weights(style), paths.normalizer()};
  if (options.warm_start) {
    warm = load_checkpoint(*options.warm_start);
    inputs.push_back(*options.warm_start);
  }
  const OnlineTrainResult result = train_online_marl(episodes, style, weights, normalizer, config.sim, train,
                                                     ObservationScaler::highway(), warm);
  save_checkpoint(result.checkpoint, paths.train_checkpoint(style));
  std::ostringstream csv;
  csv << "env_steps,episodes,mean_agent_return,goal_rate,off_road_rate,collision_rate,critic_loss,actor_loss\n";
  for (const auto& e : result.log) {
    csv << e.env_steps << ',' << e.episodes << ',' << e.mean_agent_return << ',' << e.goal_rate << ','
        << e.off_road_rate << ',' << e.collision_rate << ',' << e.critic_loss << ',' << e.actor_loss << '\n';
  }
  write_text(paths.train_log(style), csv.str());
  std::ostringstream sel;
  sel << "env_steps,goal_rate,off_road_rate,collision_rate,score\n";
  for (const auto& e : result.selection) {
    sel << e.env_steps << ',' << e.rates.goal << ',' << e.rates.off_road << ',' << e.rates.collision << ','
        << e.rates.score() << '\n';
  }
  write_text(paths.selection_log(style), sel.str());
  write_manifest(config, "train_" + std::string(style_name(style)), inputs,
                 {paths.train_checkpoint(style), paths.train_log(style), paths.selection_log(style)},
                 {{"mode", train.mode == EpisodeMode::Kind::kSelfReplay ? "self-replay" : "log-replay"},
                  {"selected_steps", result.selected_steps}});
  const auto& last = result.log.back();
  log << "train: " << style_name(style) << " SAC " << result.checkpoint.steps << " env steps, last window goal "
      << last.goal_rate << ", off-road " << last.off_road_rate << ", collision " << last.collision_rate
      << ", kept weights from step " << result.selected_steps << "\n";
}

namespace {

Episode jitter_initial_states(Episode ep, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dv(-1.0, 1.0);
  for (auto& t : ep.tracks) t.states.front().speed = std::max(0.0, t.states.front().speed + dv(rng));
  return ep;
}

}  // namespace

MacroRates stage_simulate(const PipelineConfig& config, const StageOptions& options, std::ostream& log) {
  const ArtifactPaths paths{config.output_dir};
  const DatasetIndex index = load_dataset_index(paths);
  auto episodes = load_episodes(index.test);
  if (episodes.empty()) throw DataError("no test episodes to simulate");

  std::map<DrivingStyle, PolicyCheckpoint> checkpoints;
  std::vector<fs::path> inputs = index.test;
  for (DrivingStyle s : kAllStyles) {
    if (config.mix.proportions[static_cast<std::size_t>(s)] <= 0.0) continue;
    const fs::path p = paths.train_checkpoint(s);
    if (!fs::exists(p)) throw DataError("missing checkpoint " + p.string() + " for style " + std::string(style_name(s)));
    checkpoints.emplace(s, load_checkpoint(p));
    inputs.push_back(p);
  }
  std::vector<std::unique_ptr<NeuralDrivingPolicy>> owned;
  PolicySet policies;
  for (const auto& [s, ckpt] : checkpoints) {
    owned.push_back(std::make_unique<NeuralDrivingPolicy>(ckpt.networks.actor, ckpt.scaler,
                                                          config.deterministic_policies));
    policies[s] = owned.back().get();
  }

  std::vector<std::vector<DrivingStyle>> styles;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    styles.push_back(assign_policies(episodes[i].tracks.size(), config.mix, mix_seed(config.sim.seed, i)));
    if (!options.same_initial_states) {
      episodes[i] = jitter_initial_states(std::move(episodes[i]), mix_seed(config.sim.seed, 1000003 + i));
    }
  }
  SimConfig sim = config.sim;
  sim.delta_t = episodes.front().delta_t;
  for (const auto& ep : episodes) {
    if (ep.delta_t != sim.delta_t) throw DataError("test episodes must share one delta_t");
  }
  const auto results = run_episodes(episodes, EpisodeMode::self_replay(), policies, styles, sim);

  json events_doc = json::array();
  std::vector<TerminationEvent> all_events;
  int agents = 0;
  std::vector<fs::path> outputs;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const fs::path log_path = paths.sim_dir() / "logs" / (r.log.id + ".json");
    save_episode(r.log, log_path);
    outputs.push_back(log_path);
    json styles_doc = json::object();
    for (std::size_t t = 0; t < episodes[i].tracks.size(); ++t) {
      styles_doc[episodes[i].tracks[t].agent_id] = std::string(style_name(styles[i][t]));
    }
    events_doc.push_back({{"episode", r.log.id},
                          {"log", log_path.string()},
                          {"agent_count", r.agent_count},
                          {"controllers", styles_doc},
                          {"events", events_to_json(r.events)}});
    all_events.insert(all_events.end(), r.events.begin(), r.events.end());
    agents += r.agent_count;
  }
  write_json(paths.sim_events(), events_doc);
  outputs.push_back(paths.sim_events());
  write_manifest(config, "simulate", inputs, outputs);
  const MacroRates rates = macroscopic_rates(all_events, agents);
  log << "simulate: " << results.size() << " episodes, " << agents << " agents, goal " << rates.goal << ", off-road "
      << rates.off_road << ", collision " << rates.collision << "\n";
  return rates;
}

MetricsReport stage_evaluate(const PipelineConfig& config, const StageOptions& options, std::ostream& log) {
  const ArtifactPaths paths{config.output_dir};
  const DatasetIndex index = load_dataset_index(paths);
  const auto reference = load_episodes(index.test);

  std::vector<fs::path> files = options.generated_logs;
  std::vector<TerminationEvent> events;
  int agents = 0;
  if (files.empty()) {
    const json doc = read_json(paths.sim_events());
    for (const auto& e : doc) {
      files.emplace_back(e.at("log").get<std::string>());
      const auto ev = events_from_json(e.at("events"));
      events.insert(events.end(), ev.begin(), ev.end());
      agents += e.at("agent_count").get<int>();
    }
  }
  std::vector<Episode> generated;
  for (const auto& f : files) {
    if (fs::exists(f) && fs::file_size(f) == 0) throw DataError("generated log " + f.string() + " is empty");
    generated.push_back(load_episode(f));
    if (generated.back().tracks.empty()) throw DataError("generated log " + f.string() + " has no agents");
  }
  if (agents == 0) {
    for (const auto& g : generated) agents += static_cast<int>(g.tracks.size());
  }
  MetricsReport report = compare_reports(generated, events, agents, reference, config.edges);
  report.rates_available = options.generated_logs.empty();

  fs::create_directories(paths.eval_dir());
  write_json(paths.eval_dir() / "report.json", report.to_json());
  std::vector<fs::path> outputs{paths.eval_dir() / "report.json"};
  for (Metric m : kAllMetrics) {
    const auto& c = report.metrics[static_cast<std::size_t>(m)];
    if (!c.available) continue;
    const fs::path csv = paths.eval_dir() / (std::string(metric_name(m)) + ".csv");
    write_histogram_csv(c, csv);
    outputs.push_back(csv);
  }
  const std::vector<RatesRow> rows{{"Generated (self-replay)", report.rates}};
  const std::string table = report.rates_available ? format_rates_table(rows)
                                        : std::string("macroscopic rates unavailable: external logs carry no termination events\n");
  write_text(paths.eval_dir() / "rates_table.txt", table);
  outputs.push_back(paths.eval_dir() / "rates_table.txt");
  std::vector<fs::path> inputs = files;
  inputs.insert(inputs.end(), index.test.begin(), index.test.end());
  write_manifest(config, "evaluate", inputs, outputs);

  log << "evaluate:";
  for (Metric m : kAllMetrics) {
    const auto& c = report.metrics[static_cast<std::size_t>(m)];
    log << " " << metric_name(m);
    if (c.available) {
      log << " JSD " << c.jsd << " HD " << c.hellinger << ";";
    } else {
      log << " unavailable;";
    }
  }
  log << "\n" << table;
  return report;
}

MacroRates evaluate_policy_rates(const PolicyCheckpoint& checkpoint, std::span<const Episode> episodes,
                                 const SimConfig& sim) {
  if (episodes.empty()) throw UsageError("no evaluation episodes");
  const NeuralDrivingPolicy policy(checkpoint.networks.actor, checkpoint.scaler, true);
  PolicySet policies;
  for (DrivingStyle s : kAllStyles) policies[s] = &policy;
  std::vector<std::vector<DrivingStyle>> styles;
  for (const auto& ep : episodes) styles.emplace_back(ep.tracks.size(), DrivingStyle::kNormal);
  SimConfig cfg = sim;
  cfg.delta_t = episodes.front().delta_t;
  const auto results = run_episodes(episodes, EpisodeMode::self_replay(), policies, styles, cfg);
  std::vector<TerminationEvent> events;
  int agents = 0;
  for (const auto& r : results) {
    events.insert(events.end(), r.events.begin(), r.events.end());
    agents += r.agent_count;
  }
  return macroscopic_rates(events, agents);
}

}  // namespace drivestyle
