#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "drivestyle/error.hpp"
#include "drivestyle/learn/checkpoint.hpp"
#include "drivestyle/pipeline.hpp"

using namespace drivestyle;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tiny_doc(const fs::path& out, std::uint64_t seed = 7) {
  return {
      {"seed", seed},
      {"output_dir", out.string()},
      {"synth", {{"episodes", 4}, {"test_episodes", 1}, {"steps", 60}, {"agents_per_lane", 3}}},
      {"cluster", {{"k", 3}, {"restarts", 3}, {"max_iters", 50}}},
      {"irl", {{"iterations", 5}, {"window_steps", 20}, {"max_demos", 10}}},
      {"td3bc", {{"gradient_steps", 5}, {"batch_size", 16}, {"hidden", {8, 8}}}},
      {"train",
       {{"env_steps", 150},
        {"warmup_steps", 50},
        {"log_every", 50},
        {"select_every", 100},
        {"sac", {{"batch_size", 16}, {"hidden", {8, 8}}}}}},
      {"sim", {{"max_steps", 40}}},
      {"mix", {0.0, 1.0, 0.0}},
  };
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("drivestyle_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void run_front(const PipelineConfig& cfg, std::ostream& log) {
  stage_synth(cfg, log);
  stage_cluster(cfg, log);
  stage_irl(cfg, DrivingStyle::kNormal, log);
}

}  // namespace

TEST_CASE("configuration parsing and hashing") {
  const PipelineConfig a = PipelineConfig::from_json(tiny_doc("x"));
  CHECK(a.synth.episodes == 4);
  CHECK(a.synth.seed == 7);
  CHECK(a.kmeans.seed == 7);
  CHECK(a.train.sac.hidden == std::vector<int>{8, 8});
  CHECK(a.train.select_every == 100);
  CHECK(a.hash() == PipelineConfig::from_json(tiny_doc("x")).hash());
  CHECK(a.hash() != PipelineConfig::from_json(tiny_doc("x", 8)).hash());

  json explicit_seed = tiny_doc("x");
  explicit_seed["cluster"]["seed"] = 99;
  CHECK(PipelineConfig::from_json(explicit_seed).kmeans.seed == 99);

  json bad = tiny_doc("x");
  bad["synth"]["test_episodes"] = 4;
  CHECK_THROWS_AS(PipelineConfig::from_json(bad), UsageError);
  bad = tiny_doc("x");
  bad["mix"] = {0.5, 0.2, 0.2};
  CHECK_THROWS_AS(PipelineConfig::from_json(bad), UsageError);
  bad = tiny_doc("x");
  bad["cluster"] = 3;
  CHECK_THROWS_AS(PipelineConfig::from_json(bad), ParseError);
  CHECK_THROWS_AS(PipelineConfig::load("/nonexistent/config.json"), UsageError);
  CHECK(digest_bytes("abc") == digest_bytes("abc"));
  CHECK(digest_bytes("abc") != digest_bytes("abd"));
}

TEST_CASE("best matching agreement") {
  const std::vector<int> clusters{2, 2, 0, 0, 1, 1};
  const std::vector<DrivingStyle> truth{DrivingStyle::kAggressive, DrivingStyle::kAggressive, DrivingStyle::kNormal,
                                        DrivingStyle::kNormal,     DrivingStyle::kCautious,   DrivingStyle::kNormal};
  CHECK(best_matching_agreement(clusters, truth, 3) == doctest::Approx(5.0 / 6.0));
  CHECK_THROWS_AS(best_matching_agreement(std::vector<int>{0}, truth, 3), UsageError);
}

TEST_CASE("missing inputs are data errors") {
  const fs::path out = fresh_dir("missing");
  const PipelineConfig cfg = PipelineConfig::from_json(tiny_doc(out));
  std::ostringstream log;
  CHECK_THROWS_AS(stage_cluster(cfg, log), DataError);
  stage_synth(cfg, log);
  stage_cluster(cfg, log);
  StageOptions opt;
  opt.style = DrivingStyle::kNormal;
  CHECK_THROWS_AS(stage_pretrain(cfg, opt, log), DataError);
  CHECK_THROWS_AS(stage_simulate(cfg, opt, log), DataError);
  CHECK_THROWS_AS(stage_pretrain(cfg, StageOptions{}, log), UsageError);

  json ingest = tiny_doc(out);
  ingest["data"] = {{"train", {"/nonexistent/a.json"}}, {"test", {"/nonexistent/b.json"}}};
  CHECK_THROWS_AS(stage_ingest(PipelineConfig::from_json(ingest), log), DataError);
  CHECK_THROWS_AS(stage_ingest(cfg, log), UsageError);
  fs::remove_all(out);
}

TEST_CASE("a single cluster has no validity indices") {
  const fs::path out = fresh_dir("k1");
  json doc = tiny_doc(out);
  doc["cluster"]["k"] = 1;
  const PipelineConfig cfg = PipelineConfig::from_json(doc);
  std::ostringstream log;
  stage_synth(cfg, log);
  const ClusterSummary s = stage_cluster(cfg, log);
  CHECK_FALSE(s.validity);
  std::ifstream in(ArtifactPaths{out}.cluster_report());
  CHECK(json::parse(in)["validity"] == "unavailable");
  fs::remove_all(out);
}

TEST_CASE("full pipeline on a tiny corpus") {
  const fs::path out = fresh_dir("full");
  const PipelineConfig cfg = PipelineConfig::from_json(tiny_doc(out));
  const ArtifactPaths paths{out};
  std::ostringstream log;
  run_front(cfg, log);
  const ClusterSummary s = stage_cluster(cfg, log);
  CHECK(s.label_agreement);

  StageOptions opt;
  opt.style = DrivingStyle::kNormal;
  stage_pretrain(cfg, opt, log);
  CHECK(fs::exists(paths.pretrain_checkpoint(DrivingStyle::kNormal)));

  StageOptions none = opt;
  none.steps = 0;
  none.warm_start = paths.pretrain_checkpoint(DrivingStyle::kNormal);
  stage_train(cfg, none, log);
  CHECK(load_checkpoint(paths.train_checkpoint(DrivingStyle::kNormal)).networks.actor ==
        load_checkpoint(paths.pretrain_checkpoint(DrivingStyle::kNormal)).networks.actor);

  json wide = tiny_doc(out);
  wide["train"]["sac"]["hidden"] = {8, 6};
  CHECK_THROWS_AS(stage_train(PipelineConfig::from_json(wide), none, log), DataError);

  StageOptions train = opt;
  train.warm_start = paths.pretrain_checkpoint(DrivingStyle::kNormal);
  stage_train(cfg, train, log);
  CHECK(fs::exists(paths.selection_log(DrivingStyle::kNormal)));

  const MacroRates rates = stage_simulate(cfg, opt, log);
  CHECK(rates.goal + rates.off_road + rates.collision + rates.censored == doctest::Approx(1.0));
  std::ifstream ev(paths.sim_events());
  for (const auto& e : json::parse(ev)) {
    for (const auto& [agent, style] : e.at("controllers").items()) CHECK(style == "normal");
  }
  const MetricsReport report = stage_evaluate(cfg, opt, log);
  CHECK(report.rates.goal == doctest::Approx(rates.goal));
  CHECK(fs::exists(paths.eval_dir() / "rates_table.txt"));
  CHECK(fs::exists(paths.manifest("evaluate")));

  StageOptions self = opt;
  const DatasetIndex index = load_dataset_index(paths);
  self.generated_logs = index.test;
  const MetricsReport same = stage_evaluate(cfg, self, log);
  CHECK(report.rates_available);
  CHECK_FALSE(same.rates_available);
  CHECK(json::parse(slurp(paths.eval_dir() / "report.json")).at("rates").is_null());
  for (const auto& m : same.metrics) {
    if (!m.available) continue;
    CHECK(std::abs(m.jsd) <= 1e-12);
    CHECK(std::abs(m.hellinger) <= 1e-12);
  }
  fs::remove_all(out);
}

TEST_CASE("same seed gives identical artifacts") {
  std::ostringstream log;
  const fs::path a = fresh_dir("seed_a"), b = fresh_dir("seed_b");
  run_front(PipelineConfig::from_json(tiny_doc(a)), log);
  run_front(PipelineConfig::from_json(tiny_doc(b)), log);
  for (const auto& rel : {"cluster/assignments.json", "cluster/report.json", "irl/normal.json",
                          "synth/labels.json"}) {
    REQUIRE(fs::exists(a / rel));
    CHECK(slurp(a / rel) == slurp(b / rel));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("reference fixtures parse into report formats") {
  std::ifstream in(fs::path(DRIVESTYLE_SOURCE_DIR) / "data" / "fixtures" / "reference_report.json");
  REQUIRE(in);
  const json doc = json::parse(in);
  const auto& v = doc.at("cluster").at("validity");
  CHECK(v.at("silhouette").get<double>() == 0.83);
  CHECK(v.at("davies_bouldin").get<double>() == 1.23);
  CHECK(v.at("calinski_harabasz").get<double>() == 69827.37);
  const auto& counts = doc.at("cluster").at("style_counts");
  CHECK(counts.at("normal").get<int>() + counts.at("aggressive").get<int>() + counts.at("cautious").get<int>() ==
        10080);
  const auto& speed = doc.at("human_likeness").at("speed");
  CHECK(speed.at("jsd").get<double>() == 0.3530);
  CHECK(speed.at("hellinger").get<double>() == 0.3665);
  const auto& r = doc.at("rates");
  const MacroRates rates{r.at("goal_reaching").get<double>(), r.at("off_road").get<double>(),
                         r.at("collision").get<double>(), 0.0};
  const std::vector<RatesRow> rows{{r.at("method").get<std::string>(), rates}};
  const std::string table = format_rates_table(rows);
  CHECK(table.find("90.96") != std::string::npos);
  CHECK(table.find("2.08") != std::string::npos);
  CHECK(table.find("6.91") != std::string::npos);
}

TEST_CASE("unlabeled clusters skip reward fitting") {
  const fs::path out = fresh_dir("k2");
  json doc = tiny_doc(out);
  doc["cluster"]["k"] = 2;
  const PipelineConfig cfg = PipelineConfig::from_json(doc);
  std::ostringstream log;
  stage_synth(cfg, log);
  stage_cluster(cfg, log);
  CHECK_FALSE(stage_irl(cfg, DrivingStyle::kAggressive, log));
  CHECK_FALSE(fs::exists(ArtifactPaths{out}.weights(DrivingStyle::kAggressive)));
  fs::remove_all(out);
}

TEST_CASE("an empty generated log is named in the error") {
  const fs::path out = fresh_dir("empty_log");
  const PipelineConfig cfg = PipelineConfig::from_json(tiny_doc(out));
  std::ostringstream log;
  stage_synth(cfg, log);
  const fs::path empty = out / "empty.json";
  std::ofstream(empty).close();
  StageOptions opt;
  opt.generated_logs = {empty};
  try {
    stage_evaluate(cfg, opt, log);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(empty.string()) != std::string::npos);
  }
  fs::remove_all(out);
}
