#pragma once

#include <string>

#include <json.hpp>

#include "drivestyle/error.hpp"

namespace drivestyle {

/// Overwrites `out` with doc[key] when present. Throws ParseError naming
/// `path.key` on a type mismatch.
template <class T>
void read_optional(const nlohmann::json& doc, const char* key, T& out, const std::string& path) {
  if (!doc.is_object()) throw ParseError(path, "expected an object");
  const auto it = doc.find(key);
  if (it == doc.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.empty() ? std::string(key) : path + "." + key, e.what());
  }
}

}  // namespace drivestyle
