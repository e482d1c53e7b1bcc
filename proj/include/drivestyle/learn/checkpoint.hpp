#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "drivestyle/dataset.hpp"
#include "drivestyle/learn/policy.hpp"
#include "drivestyle/style_label.hpp"

namespace drivestyle {

inline constexpr int kCheckpointVersion = 1;

struct PolicyCheckpoint {
  std::optional<DrivingStyle> style;
  std::string algorithm;  // "init", "td3bc" or "sac"
  ActorCritic networks;
  ObservationScaler scaler;
  std::optional<FeatureNormalizer> normalizer;
  nlohmann::json config = nlohmann::json::object();
  long steps = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  /// Validates every layer shape against its parameter array. Throws
  /// ParseError with the offending field.
  static PolicyCheckpoint from_json(const nlohmann::json& doc);
};

void save_checkpoint(const PolicyCheckpoint& checkpoint, const std::filesystem::path& path);
/// Throws DataError when the file is missing or malformed.
PolicyCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Throws DataError describing the first layer whose shape differs.
void require_same_shapes(const ActorCritic& expected, const ActorCritic& actual);

}  // namespace drivestyle
