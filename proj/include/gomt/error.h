#ifndef GOMT_ERROR_H_
#define GOMT_ERROR_H_

#include <stdexcept>
#include <string>

namespace gomt {

// Base class for every error raised by this library. Structural problems
// (bad inputs, divergence, infeasible marginals) throw; numerical
// non-convergence is reported through result flags instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInertiaError : public Error {
 public:
  using Error::Error;
};

class SingularStateError : public Error {
 public:
  using Error::Error;
};

class InvalidWeightError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

// Raised when an integration produces a non-finite state.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double time)
      : Error(what + " (t=" + std::to_string(time) + ")"), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class MarginalMismatchError : public Error {
 public:
  using Error::Error;
};

class EpsilonTooSmallError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gomt

#endif  // GOMT_ERROR_H_
