#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "drivestyle/error.hpp"
#include "drivestyle/pipeline.hpp"

namespace ds = drivestyle;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "pipeline configuration file")->required();
  cmd->add_option("--seed", c.seed, "global seed override");
  cmd->add_option("-o,--output", c.output, "output directory override");
}

ds::PipelineConfig load_config(const Common& c) {
  std::ifstream in(c.config);
  if (!in) throw ds::UsageError("cannot open config file " + c.config);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ds::UsageError(c.config + ": malformed JSON: " + e.what());
  }
  if (!doc.is_object()) throw ds::UsageError(c.config + ": expected a JSON object");
  if (c.seed) doc["seed"] = *c.seed;
  if (c.output) doc["output_dir"] = *c.output;
  return ds::PipelineConfig::from_json(doc);
}

ds::DrivingStyle to_style(const std::string& name) {
  const auto s = ds::parse_style(name);
  if (!s) throw ds::UsageError("unknown style '" + name + "' (expected aggressive, normal or cautious)");
  return *s;
}

ds::EpisodeMode::Kind to_mode(const std::string& name) {
  if (name == "self-replay") return ds::EpisodeMode::Kind::kSelfReplay;
  if (name == "log-replay") return ds::EpisodeMode::Kind::kLogReplay;
  throw ds::UsageError("unknown mode '" + name + "' (expected self-replay or log-replay)");
}

std::array<double, ds::kStyleCount> parse_mix(const std::string& text) {
  std::array<double, ds::kStyleCount> mix{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= mix.size()) throw ds::UsageError("--mix takes three comma-separated proportions");
    try {
      std::size_t used = 0;
      mix[i] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ds::UsageError("--mix: '" + item + "' is not a number");
    }
    ++i;
  }
  if (i != mix.size()) throw ds::UsageError("--mix takes three comma-separated proportions");
  return mix;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Driving-style clustering, reward learning, policy training and scenario evaluation"};
  app.require_subcommand(1);

  Common common;
  std::string style_name;
  std::string mode_name;
  std::string mix_text;
  std::string warm_start;
  long steps = -1;
  bool same_initial = true;
  std::vector<std::string> generated;

  auto* synth = app.add_subcommand("synth", "generate the scripted synthetic corpus");
  auto* ingest = app.add_subcommand("ingest", "validate episode files and record the train/test split");
  auto* cluster = app.add_subcommand("cluster", "cluster agents into driving styles");
  auto* irl = app.add_subcommand("irl", "fit reward weights per style");
  auto* pretrain = app.add_subcommand("pretrain", "offline TD3+BC pretraining for one style");
  auto* train = app.add_subcommand("train", "online multi-agent SAC training for one style");
  auto* simulate = app.add_subcommand("simulate", "roll out the trained policies on the test episodes");
  auto* evaluate = app.add_subcommand("evaluate", "compare generated logs against the reference episodes");
  for (auto* cmd : {synth, ingest, cluster, irl, pretrain, train, simulate, evaluate}) add_common(cmd, common);

  irl->add_option("--style", style_name, "style to fit (default: every style)");
  for (auto* cmd : {pretrain, train}) {
    cmd->add_option("--style", style_name, "style to train")->required();
    cmd->add_option("--steps", steps, "gradient steps (pretrain) or environment steps (train)");
  }
  train->add_option("--warm-start", warm_start, "pretrain checkpoint to start from");
  train->add_option("--mode", mode_name, "self-replay or log-replay");
  simulate->add_option("--mix", mix_text, "style proportions aggressive,normal,cautious");
  simulate->add_option("--same-initial-states", same_initial, "spawn from the recorded initial states (true/false)");
  evaluate->add_option("--generated", generated, "generated log files (default: simulate output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    ds::PipelineConfig config = load_config(common);
    ds::StageOptions options;
    if (!style_name.empty()) options.style = to_style(style_name);
    if (steps >= 0) options.steps = steps;
    if (!mode_name.empty()) options.mode = to_mode(mode_name);
    if (!warm_start.empty()) options.warm_start = warm_start;
    options.same_initial_states = same_initial;
    options.generated_logs.assign(generated.begin(), generated.end());
    if (!mix_text.empty()) {
      config.mix.proportions = parse_mix(mix_text);
      config.mix.validate();
    }

    if (synth->parsed()) {
      ds::stage_synth(config, std::cout);
    } else if (ingest->parsed()) {
      ds::stage_ingest(config, std::cout);
    } else if (cluster->parsed()) {
      ds::stage_cluster(config, std::cout);
    } else if (irl->parsed()) {
      if (options.style) {
        ds::stage_irl(config, *options.style, std::cout);
      } else {
        for (ds::DrivingStyle s : ds::kAllStyles) ds::stage_irl(config, s, std::cout);
      }
    } else if (pretrain->parsed()) {
      ds::stage_pretrain(config, options, std::cout);
    } else if (train->parsed()) {
      ds::stage_train(config, options, std::cout);
    } else if (simulate->parsed()) {
      ds::stage_simulate(config, options, std::cout);
    } else if (evaluate->parsed()) {
      ds::stage_evaluate(config, options, std::cout);
    }
  } catch (const ds::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed artifact: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
