#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pathcv {

/// A computation produced NaN or Inf (or would overflow).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input whose structure does not match the expected schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A linear system is singular / rank deficient.
class RankError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or sample-count mismatch.
class ArityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested operation is not available for this family/model.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration; carries the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace pathcv
