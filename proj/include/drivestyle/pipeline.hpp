#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivestyle/eval.hpp"
#include "drivestyle/irl.hpp"
#include "drivestyle/learn/rl.hpp"
#include "drivestyle/learn/training.hpp"
#include "drivestyle/planner.hpp"
#include "drivestyle/sim.hpp"
#include "drivestyle/styles.hpp"
#include "drivestyle/synth.hpp"

namespace drivestyle {

/// Demonstration and candidate settings for the IRL stage.
struct IrlStageConfig {
  IrlConfig irl;
  CandidateGrid grid;
  int window_steps = 40;
  int max_demos = 0;  // 0 keeps every window
};

struct PipelineConfig {
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> train_episodes;
  std::vector<std::filesystem::path> test_episodes;
  SynthConfig synth;
  int synth_test_episodes = 3;
  RiskThresholds risk;
  KMeansOptions kmeans;
  IrlStageConfig irl;
  Td3BcConfig td3bc;
  OnlineTrainConfig train;
  SimConfig sim;
  StyleMix mix;
  bool deterministic_policies = true;
  MetricEdges edges = MetricEdges::defaults();
  nlohmann::json source = nlohmann::json::object();  // the parsed document

  /// Missing sections keep their defaults. The global seed feeds every stage
  /// that has no explicit seed of its own.
  static PipelineConfig from_json(const nlohmann::json& doc);
  static PipelineConfig load(const std::filesystem::path& path);
  /// Stable digest of the effective configuration.
  std::string hash() const;
  nlohmann::json to_json() const;
};

/// Stable 64-bit FNV-1a digest, hex encoded.
std::string digest_bytes(std::string_view bytes);
std::string digest_file(const std::filesystem::path& path);

/// Artifact directory layout under the output directory.
struct ArtifactPaths {
  std::filesystem::path root;

  std::filesystem::path dataset() const { return root / "dataset.json"; }
  std::filesystem::path synth_labels() const { return root / "synth" / "labels.json"; }
  std::filesystem::path assignments() const { return root / "cluster" / "assignments.json"; }
  std::filesystem::path cluster_report() const { return root / "cluster" / "report.json"; }
  std::filesystem::path normalizer() const { return root / "irl" / "normalizer.json"; }
  std::filesystem::path weights(DrivingStyle s) const;
  std::filesystem::path irl_log(DrivingStyle s) const;
  std::filesystem::path pretrain_checkpoint(DrivingStyle s) const;
  std::filesystem::path train_checkpoint(DrivingStyle s) const;
  std::filesystem::path train_log(DrivingStyle s) const;
  std::filesystem::path selection_log(DrivingStyle s) const;
  std::filesystem::path sim_dir() const { return root / "sim"; }
  std::filesystem::path sim_events() const { return root / "sim" / "events.json"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path manifest(std::string_view stage) const;
};

/// Train and test episode files recorded by synth or ingest.
struct DatasetIndex {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> test;
};
DatasetIndex load_dataset_index(const ArtifactPaths& paths);
std::vector<Episode> load_episodes(const std::vector<std::filesystem::path>& files);

struct StageOptions {
  std::optional<DrivingStyle> style;
  std::optional<std::filesystem::path> warm_start;
  std::optional<long> steps;  // gradient or env steps override
  std::optional<EpisodeMode::Kind> mode;
  bool same_initial_states = true;
  std::vector<std::filesystem::path> generated_logs;  // evaluate inputs; default: simulate output
};

struct ClusterSummary {
  ClusteringModel model;
  std::optional<ValidityIndices> validity;
  std::vector<StyleAssignment> assignments;
  std::optional<double> label_agreement;  // against synth labels, when present
};

void stage_synth(const PipelineConfig& config, std::ostream& log);
void stage_ingest(const PipelineConfig& config, std::ostream& log);
ClusterSummary stage_cluster(const PipelineConfig& config, std::ostream& log);
/// Returns false when the style's cluster is empty and the stage was skipped.
bool stage_irl(const PipelineConfig& config, DrivingStyle style, std::ostream& log);
void stage_pretrain(const PipelineConfig& config, const StageOptions& options, std::ostream& log);
void stage_train(const PipelineConfig& config, const StageOptions& options, std::ostream& log);
/// Returns the macroscopic rates of the simulated agents.
MacroRates stage_simulate(const PipelineConfig& config, const StageOptions& options, std::ostream& log);
MetricsReport stage_evaluate(const PipelineConfig& config, const StageOptions& options, std::ostream& log);

/// Fraction of agents whose cluster maps to their true label under the best
/// one-to-one matching of clusters to styles.
double best_matching_agreement(std::span<const int> clusters, std::span<const DrivingStyle> truth, int k);

/// Macroscopic rates of a checkpointed policy driving every agent of every
/// episode in self-replay, with deterministic actions.
MacroRates evaluate_policy_rates(const PolicyCheckpoint& checkpoint, std::span<const Episode> episodes,
                                 const SimConfig& sim);

}  // namespace drivestyle
