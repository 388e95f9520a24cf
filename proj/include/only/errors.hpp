#pragma once

#include <stdexcept>
#include <string>

namespace only {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or dimensions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// KV cache / sequence capacity exhausted.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// A quantity is mathematically undefined for the given input
// (entropy of an empty set, ratio with zero denominator, all tokens masked).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Sequence position not classified by a TokenLayout, or layouts that overlap.
class LayoutError : public Error {
 public:
  using Error::Error;
};

class ModelFileError : public Error {
 public:
  enum class Kind { Io, Malformed, DimensionMismatch, Checksum };

  ModelFileError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace only
