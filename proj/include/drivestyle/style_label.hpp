#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace drivestyle {

enum class DrivingStyle : int { kAggressive = 0, kNormal = 1, kCautious = 2 };
inline constexpr int kStyleCount = 3;
inline constexpr std::array<DrivingStyle, kStyleCount> kAllStyles = {
    DrivingStyle::kAggressive, DrivingStyle::kNormal, DrivingStyle::kCautious};

inline std::string_view style_name(DrivingStyle style) {
  switch (style) {
    case DrivingStyle::kAggressive: return "aggressive";
    case DrivingStyle::kNormal: return "normal";
    case DrivingStyle::kCautious: return "cautious";
  }
  return "unknown";
}

inline std::optional<DrivingStyle> parse_style(std::string_view name) {
  for (DrivingStyle s : kAllStyles) {
    if (style_name(s) == name) return s;
  }
  return std::nullopt;
}

}  // namespace drivestyle
