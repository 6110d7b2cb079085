#pragma once

#include <stdexcept>
#include <string>

namespace snerf {

/// Invalid argument to a numerical routine (out-of-range pixel, negative density, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Unsatisfiable or malformed configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Any failure while reading or validating on-disk data. Maps to CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingFileError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

/// Training produced a non-finite loss. Maps to CLI exit code 4.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace snerf
