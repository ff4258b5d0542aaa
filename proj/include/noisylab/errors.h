#pragma once

#include <stdexcept>
#include <string>

namespace noisylab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or layouts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside an op's mathematical domain, e.g. log(x <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or mismatched file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent dataset contents (bad ISO, missing clean, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration or argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Camera or ISO key absent from a model's conditioning tables.
class ConditionError : public Error {
 public:
  using Error::Error;
};

// Misuse of a stateful object, e.g. backward() on a consumed tape.
class StateError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, std::string mode, const std::string& reason)
      : Error("training diverged in mode '" + mode + "' at epoch " +
              std::to_string(epoch) + ": " + reason),
        epoch_(epoch),
        mode_(std::move(mode)),
        reason_(reason) {}

  int epoch() const { return epoch_; }
  const std::string& mode() const { return mode_; }
  const std::string& reason() const { return reason_; }

 private:
  int epoch_;
  std::string mode_;
  std::string reason_;
};

}  // namespace noisylab
