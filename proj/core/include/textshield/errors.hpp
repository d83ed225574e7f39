#pragma once

#include <stdexcept>
#include <string>

namespace textshield {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes incompatible with an op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed file content (datasets, lexicons, checkpoints, records).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Checkpoint or record written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment or component configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An upstream artifact a command depends on does not exist.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace textshield
