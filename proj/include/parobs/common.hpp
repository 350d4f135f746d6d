#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace parobs {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition on caller-supplied data.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A computation failed or could not reach its target.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An intermediate quantity left the range of double precision.
class OverflowError : public NumericalError {
 public:
  OverflowError(const std::string& what, double exponent)
      : NumericalError(what + " (exponent " + std::to_string(exponent) + ")"),
        exponent_(exponent) {}
  double exponent() const noexcept { return exponent_; }

 private:
  double exponent_;
};

/// Iterative solver stopped before reaching its tolerance.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : NumericalError(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace parobs
