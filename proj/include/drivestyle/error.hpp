#pragma once

#include <stdexcept>
#include <string>

namespace drivestyle {

// Failure classes map onto the CLI exit codes (usage 1, data 2, numeric 3).
enum class ErrorKind { kUsage = 1, kData = 2, kNumeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

/// Schema violation in an input file. `field` is a JSON-pointer-like path
/// such as `tracks[2].states[7].speed`.
class ParseError : public DataError {
 public:
  ParseError(const std::string& field, const std::string& reason)
      : DataError(field + ": " + reason), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace drivestyle
