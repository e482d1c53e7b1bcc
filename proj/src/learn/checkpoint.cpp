#include "drivestyle/learn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "drivestyle/error.hpp"

namespace drivestyle {

namespace {

nlohmann::json mlp_to_json(const Mlp& net) {
  const auto& p = net.parameters();
  return {{"sizes", net.sizes()}, {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
}

Mlp mlp_from_json(const nlohmann::json& doc, const std::string& field) {
  if (!doc.is_object() || !doc.contains("sizes") || !doc.contains("parameters")) {
    throw ParseError(field, "expected {sizes, parameters}");
  }
  std::vector<int> sizes;
  std::vector<double> params;
  try {
    sizes = doc.at("sizes").get<std::vector<int>>();
    params = doc.at("parameters").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(field, e.what());
  }
  Mlp net;
  try {
    net = Mlp(sizes);
  } catch (const UsageError& e) {
    throw ParseError(field + ".sizes", e.what());
  }
  if (static_cast<Eigen::Index>(params.size()) != net.parameters().size()) {
    throw ParseError(field + ".parameters", "has " + std::to_string(params.size()) + " values, layer sizes need " +
                                                std::to_string(net.parameters().size()));
  }
  net.parameters() = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
  return net;
}

void check_io(const Mlp& net, int in, int out, const std::string& field) {
  if (net.input_dim() != in || net.output_dim() != out) {
    throw ParseError(field, "expected " + std::to_string(in) + " inputs and " + std::to_string(out) + " outputs");
  }
}

}  // namespace

nlohmann::json PolicyCheckpoint::to_json() const {
  nlohmann::json doc;
  doc["version"] = kCheckpointVersion;
  doc["style"] = style ? nlohmann::json(std::string(style_name(*style))) : nlohmann::json(nullptr);
  doc["algorithm"] = algorithm;
  doc["action_bounds"] = networks.actor.bounds().to_json();
  doc["actor"] = mlp_to_json(networks.actor.trunk());
  doc["actor_target"] = mlp_to_json(networks.actor_target.trunk());
  doc["q1"] = mlp_to_json(networks.q1);
  doc["q2"] = mlp_to_json(networks.q2);
  doc["q1_target"] = mlp_to_json(networks.q1_target);
  doc["q2_target"] = mlp_to_json(networks.q2_target);
  doc["observation_scaler"] = scaler.to_json();
  doc["feature_normalizer"] = normalizer ? normalizer->to_json() : nlohmann::json(nullptr);
  doc["config"] = config;
  doc["steps"] = steps;
  doc["seed"] = seed;
  return doc;
}

PolicyCheckpoint PolicyCheckpoint::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("checkpoint", "expected an object");
  for (const char* key : {"version", "algorithm", "action_bounds", "actor", "actor_target", "q1", "q2", "q1_target",
                          "q2_target", "observation_scaler", "steps", "seed"}) {
    if (!doc.contains(key)) throw ParseError(key, "missing");
  }
  if (doc.at("version") != kCheckpointVersion) throw ParseError("version", "unsupported checkpoint version");
  PolicyCheckpoint c;
  if (doc.contains("style") && !doc.at("style").is_null()) {
    c.style = parse_style(doc.at("style").get<std::string>());
    if (!c.style) throw ParseError("style", "unknown style");
  }
  c.algorithm = doc.at("algorithm").get<std::string>();
  const ActionBounds bounds = ActionBounds::from_json(doc.at("action_bounds"));
  const int critic_in = kObservationDim + kActionDim;
  Mlp actor = mlp_from_json(doc.at("actor"), "actor");
  Mlp actor_target = mlp_from_json(doc.at("actor_target"), "actor_target");
  check_io(actor, kObservationDim, 2 * kActionDim, "actor");
  check_io(actor_target, kObservationDim, 2 * kActionDim, "actor_target");
  c.networks.actor = GaussianPolicy(std::move(actor), bounds);
  c.networks.actor_target = GaussianPolicy(std::move(actor_target), bounds);
  c.networks.q1 = mlp_from_json(doc.at("q1"), "q1");
  c.networks.q2 = mlp_from_json(doc.at("q2"), "q2");
  c.networks.q1_target = mlp_from_json(doc.at("q1_target"), "q1_target");
  c.networks.q2_target = mlp_from_json(doc.at("q2_target"), "q2_target");
  check_io(c.networks.q1, critic_in, 1, "q1");
  check_io(c.networks.q2, critic_in, 1, "q2");
  check_io(c.networks.q1_target, critic_in, 1, "q1_target");
  check_io(c.networks.q2_target, critic_in, 1, "q2_target");
  c.scaler = ObservationScaler::from_json(doc.at("observation_scaler"));
  if (doc.contains("feature_normalizer") && !doc.at("feature_normalizer").is_null()) {
    c.normalizer = FeatureNormalizer::from_json(doc.at("feature_normalizer"));
  }
  if (doc.contains("config")) c.config = doc.at("config");
  c.steps = doc.at("steps").get<long>();
  c.seed = doc.at("seed").get<std::uint64_t>();
  return c;
}

void save_checkpoint(const PolicyCheckpoint& checkpoint, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out << checkpoint.to_json().dump() << "\n";
}

PolicyCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), e.what());
  }
  try {
    return PolicyCheckpoint::from_json(doc);
  } catch (const ParseError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void require_same_shapes(const ActorCritic& expected, const ActorCritic& actual) {
  auto check = [](const Mlp& a, const Mlp& b, const char* name) {
    if (a.sizes() == b.sizes()) return;
    auto fmt = [](const std::vector<int>& s) {
      std::ostringstream os;
      for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
      return os.str();
    };
    throw DataError(std::string("warm-start ") + name + " has layers " + fmt(b.sizes()) + ", expected " +
                    fmt(a.sizes()));
  };
  check(expected.actor.trunk(), actual.actor.trunk(), "actor");
  check(expected.q1, actual.q1, "q1");
  check(expected.q2, actual.q2, "q2");
}

}  // namespace drivestyle
