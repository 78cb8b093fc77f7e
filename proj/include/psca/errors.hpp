#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace psca {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A function evaluation produced NaN or Inf.
class NumericDomainError : public Error {
 public:
  NumericDomainError(const std::string& what, std::size_t coordinate)
      : Error(what + " (coordinate " + std::to_string(coordinate) + ")"),
        coordinate_(coordinate) {}
  std::size_t coordinate() const noexcept { return coordinate_; }

 private:
  std::size_t coordinate_;
};

class UnsupportedSurrogate : public Error {
 public:
  using Error::Error;
};

class InnerSolveFailure : public Error {
 public:
  InnerSolveFailure(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A hypothesis of a convergence result (e.g. eps <= L1^2/L2, eta < 2C/L1)
/// does not hold, so the guarantee it backs would be vacuous.
class HypothesisViolated : public Error {
 public:
  using Error::Error;
};

class LeftValidRegion : public Error {
 public:
  LeftValidRegion(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, double best_estimate,
                     double residual)
      : Error(what), best_estimate_(best_estimate), residual_(residual) {}
  double best_estimate() const noexcept { return best_estimate_; }
  double residual() const noexcept { return residual_; }

 private:
  double best_estimate_;
  double residual_;
};

/// Declared smoothness constants contradicted by an observed quantity.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace psca
