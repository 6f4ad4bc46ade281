#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace capstag {

// Shape disagreement between tensor operands.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration value (rates, counts, flag combinations).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite value where the contract requires finite math.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed text input; carries the 1-based line number when known.
struct ParseError : std::runtime_error {
  std::size_t line = 0;
  ParseError(std::size_t line_no, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid label index or tag sequence.
struct LabelError : std::runtime_error {
  explicit LabelError(const std::string& what) : std::runtime_error(what) {}
};

// Input that violates a documented precondition (e.g. overlapping spans).
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint directory that cannot be restored.
struct LoadError : std::runtime_error {
  explicit LoadError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace capstag
