#pragma once

#include <stdexcept>
#include <string>

namespace mtekit {

/// Base class for every failure raised by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad input: missing columns, malformed files, invalid configuration.
class InputError : public Error {
  public:
    using Error::Error;
};

/// An estimator could not produce a trustworthy answer.
class NumericalError : public Error {
  public:
    using Error::Error;
};

/// Design matrix is not of full column rank.
class RankError : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

/// Logit coefficients diverge because a regressor separates the outcome.
class SeparationError : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

/// Iterative optimizer ran out of iterations.
class ConvergenceError : public NumericalError {
  public:
    ConvergenceError(const std::string &what, double gradient_norm)
        : NumericalError(what), gradient_norm_(gradient_norm) {}
    double gradient_norm() const { return gradient_norm_; }

  private:
    double gradient_norm_;
};

} // namespace mtekit
