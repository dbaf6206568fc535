#pragma once

#include <stdexcept>
#include <string>

namespace deskasr {

// Base for everything this library throws on contract violations.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Sequence too short for the receptive field of a windowed model/op.
class ContextError : public Error {
 public:
  using Error::Error;
};

// Class/state label outside the valid range.
class LabelError : public Error {
 public:
  using Error::Error;
};

// Parameter/gradient bookkeeping mismatch (e.g. update without a gradient).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Invalid or degenerate configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Feature/stream description does not match the data it is applied to.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Score streams cannot be fused (shape or alignment mismatch).
class FusionError : public Error {
 public:
  using Error::Error;
};

// Symmetric time crop impossible (odd or negative difference).
class CropError : public Error {
 public:
  using Error::Error;
};

// Forced alignment has no monotone path (too few frames).
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Training diverged or is otherwise unable to proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// EM/interpolation input is degenerate (e.g. all-zero likelihoods).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace deskasr
