#pragma once

#include <stdexcept>
#include <string>

namespace gust {

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was invoked in the wrong order (e.g. backward before forward).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Training produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset file could not be parsed or validated.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint is malformed, truncated, or from another format version.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gust
