#pragma once

#include <stdexcept>
#include <string>

namespace artuda {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Operand shapes do not conform to a primitive's shape rule. The message
/// names the primitive and the offending shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf; non-finite values are never stored.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration (attack, objective, experiment).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset, file, or schema.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training aborted on a non-finite loss; carries where it happened.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, int epoch, int step)
      : Error(what), epoch(epoch), step(step) {}
  int epoch;
  int step;
};

}  // namespace artuda
