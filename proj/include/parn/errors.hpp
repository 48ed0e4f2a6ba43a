#pragma once

#include <stdexcept>
#include <string>

namespace parn {

/// Shape or size disagreement between operands.
class DimensionError : public std::runtime_error {
public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Argument outside its documented domain (bad label, empty list, ...).
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Operation called in the wrong order (e.g. backward before forward).
class StateError : public std::runtime_error {
public:
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Network contains layers an analysis does not support.
class UnsupportedArchitectureError : public std::runtime_error {
public:
  explicit UnsupportedArchitectureError(const std::string& msg)
      : std::runtime_error(msg) {}
};

/// Malformed file contents (bad magic, corrupt header, version mismatch).
class FormatError : public std::runtime_error {
public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Container format version the reader does not understand.
class VersionError : public FormatError {
public:
  explicit VersionError(const std::string& msg) : FormatError(msg) {}
};

/// Underlying read/write failure or truncated stream.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Declared payload size disagrees with the bytes present.
class LengthError : public IoError {
public:
  explicit LengthError(const std::string& msg) : IoError(msg) {}
};

/// Training diverged (NaN loss) or could not proceed.
class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace parn
