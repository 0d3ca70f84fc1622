#ifndef TAPGLASS_ERROR_HPP
#define TAPGLASS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace tapglass {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A size cap (dimension, enumeration or memory budget) would be exceeded.
class CapError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unknown configuration input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The overlap law has no isolated top lobe above the mass floor.
class NoJumpError : public Error {
 public:
  NoJumpError() : Error("no overlap jump detected") {}
};

class InsufficientReplicasError : public Error {
 public:
  InsufficientReplicasError() : Error("insufficient replicas") {}
};

/// Too many replicas of an experiment failed.
class ExperimentError : public Error {
 public:
  using Error::Error;
};

/// Quadrature did not reach the requested tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double achieved)
      : Error(what + " (achieved tolerance " + std::to_string(achieved) + ")"),
        achieved_(achieved) {}
  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

}  // namespace tapglass

#endif  // TAPGLASS_ERROR_HPP
