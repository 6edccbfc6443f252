#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace linkscope {

// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// An input file could not be read.
class IngestError : public Error {
 public:
  using Error::Error;
};

// Malformed content. Carries the 1-based line number when known (0 otherwise).
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// An object was used before it reached the required state (e.g. unfitted scaler).
class StateError : public Error {
 public:
  using Error::Error;
};

// Training could not start or produced no usable model.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// An iterative solver hit its iteration cap. The best model found so far is
// still usable and travels with the error.
template <class Model>
class ConvergenceError : public TrainingError {
 public:
  ConvergenceError(const std::string& what, Model best) : TrainingError(what), best_(std::move(best)) {}
  const Model& best_so_far() const { return best_; }

 private:
  Model best_;
};

// Configuration file violates the documented schema.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace linkscope
