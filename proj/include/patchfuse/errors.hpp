// SPDX-License-Identifier: Apache-2.0
//
// Error categories shared by every module. Each category maps to a distinct
// CLI exit code.

#pragma once

#include <stdexcept>
#include <string>

namespace patchfuse {

enum class ErrorCategory {
  shape = 10,
  config = 11,
  label = 12,
  parse = 13,
  schema = 14,
  lookup = 15,
  io = 16,
  transient_network = 17,
  permanent_network = 18,
  data = 19,
};

const char* category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorCategory::shape, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCategory::config, w) {}
};
struct LabelError : Error {
  explicit LabelError(const std::string& w) : Error(ErrorCategory::label, w) {}
};
struct LookupError : Error {
  explicit LookupError(const std::string& w) : Error(ErrorCategory::lookup, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCategory::io, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorCategory::data, w) {}
};

/// A network failure. `status` is the HTTP status (0 when no response
/// arrived); `retry_after_s` carries the server's wait hint when it gave one.
class NetworkError : public Error {
 public:
  NetworkError(ErrorCategory category, const std::string& w, int status, long long retry_after_s)
      : Error(category, w), status_(status), retry_after_s_(retry_after_s) {}
  int status() const noexcept { return status_; }
  long long retry_after_s() const noexcept { return retry_after_s_; }

 private:
  int status_;
  long long retry_after_s_;
};

/// Still failing after all retries (5xx, connection errors).
struct TransientNetworkError : NetworkError {
  TransientNetworkError(const std::string& w, int status, long long retry_after_s = -1)
      : NetworkError(ErrorCategory::transient_network, w, status, retry_after_s) {}
};
/// Not worth retrying (4xx other than rate limiting).
struct PermanentNetworkError : NetworkError {
  PermanentNetworkError(const std::string& w, int status, long long retry_after_s = -1)
      : NetworkError(ErrorCategory::permanent_network, w, status, retry_after_s) {}
};

/// Malformed input text; `line` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& w, std::size_t line)
      : Error(ErrorCategory::parse, w + (line ? " (line " + std::to_string(line) + ")" : "")),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A corpus record violating the schema, naming the offending field.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& field, std::size_t line, const std::string& why)
      : Error(ErrorCategory::schema,
              "schema violation at line " + std::to_string(line) + ", field '" + field + "': " + why),
        field_(field),
        line_(line) {}
  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

}  // namespace patchfuse
