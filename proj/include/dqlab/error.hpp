#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dqlab {

/// Shape or arity mismatch between tensors, or a malformed call.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input outside the mathematical domain of an operation (log of a
/// non-positive value, non-finite quantizer input, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid user configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite value. Carries optional location
/// information filled in by whichever layer catches it first.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, long long datapoint = -1)
      : std::runtime_error(what), datapoint_(datapoint) {}

  long long datapoint() const { return datapoint_; }

 private:
  long long datapoint_;
};

/// Malformed external file (IDX container, config text).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Checkpoint could not be read: missing file, bad magic, version mismatch,
/// truncation or checksum failure.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal invariant violated (should be unreachable).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dqlab
