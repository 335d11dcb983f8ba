#ifndef LORVAR_CORE_ERROR_HPP
#define LORVAR_CORE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace lorvar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition (empty grid, non-positive radius, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Evaluation on the singular line x = 0 (Gamma), where maps and roofs are undefined.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// An orbit landed exactly on x = 0 and cannot be continued.
class OrbitTerminated : public SingularityError {
 public:
  using SingularityError::SingularityError;
};

/// Parameters left the class of models the library handles.
class ModelViolation : public Error {
 public:
  using Error::Error;
};

/// Iterative procedure stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class QuadratureError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

class StepSizeUnderflow : public Error {
 public:
  using Error::Error;
};

/// Fewer results than requested were produced within the budget.
class PartialResult : public Error {
 public:
  PartialResult(const std::string& what, std::size_t produced)
      : Error(what), produced_(produced) {}
  std::size_t produced() const noexcept { return produced_; }

 private:
  std::size_t produced_;
};

class ProjectionQualityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lorvar

#endif  // LORVAR_CORE_ERROR_HPP
