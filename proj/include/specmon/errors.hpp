#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace specmon {

/// Broad failure categories, mapped to CLI exit codes:
/// validation -> 2, numerical -> 3, io -> 4.
enum class ErrorCategory { Validation, Numerical, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& what)
      : std::runtime_error(what), category_(cat) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct AlreadyNormalizedError : Error {
  AlreadyNormalizedError()
      : Error(ErrorCategory::Validation, "spectrum is already normalized") {}
};

struct NotNormalizedError : Error {
  NotNormalizedError()
      : Error(ErrorCategory::Validation, "spectrum is not normalized") {}
};

struct OutOfRangeError : Error {
  OutOfRangeError(std::size_t bin, double value)
      : Error(ErrorCategory::Validation,
              "normalized bin " + std::to_string(bin) + " = " +
                  std::to_string(value) + " outside [-1, 1]"),
        bin(bin),
        value(value) {}
  std::size_t bin;
  double value;
};

struct DimensionMismatchError : Error {
  explicit DimensionMismatchError(const std::string& what)
      : Error(ErrorCategory::Validation, "dimension mismatch: " + what) {}
};

struct EmptySetError : Error {
  explicit EmptySetError(const std::string& what)
      : Error(ErrorCategory::Validation, "empty set: " + what) {}
};

struct InvalidProbabilityError : Error {
  explicit InvalidProbabilityError(const std::string& what)
      : Error(ErrorCategory::Validation, "invalid probability: " + what) {}
};

struct MissingClassError : Error {
  explicit MissingClassError(const std::string& cls)
      : Error(ErrorCategory::Validation,
              "no training spectra for class " + cls) {}
};

struct RankDeficientError : Error {
  RankDeficientError()
      : Error(ErrorCategory::Numerical, "basis matrix is rank deficient") {}
};

struct DegenerateWeightsError : Error {
  explicit DegenerateWeightsError(double sum)
      : Error(ErrorCategory::Numerical,
              "basis weights sum " + std::to_string(sum) +
                  " too close to zero to classify") {}
};

struct NonFiniteLossError : Error {
  explicit NonFiniteLossError(int epoch)
      : Error(ErrorCategory::Numerical,
              "loss became non-finite at epoch " + std::to_string(epoch)),
        epoch(epoch) {}
  int epoch;
};

struct OutOfBoundsError : Error {
  explicit OutOfBoundsError(const std::string& what)
      : Error(ErrorCategory::Validation, "out of bounds: " + what) {}
};

struct BadWindowError : Error {
  BadWindowError(int window, int dim)
      : Error(ErrorCategory::Validation,
              "window length " + std::to_string(window) +
                  " does not divide spectrum length " + std::to_string(dim)) {}
};

struct EmptyAfterMaskError : Error {
  EmptyAfterMaskError()
      : Error(ErrorCategory::Validation, "no samples left after masking") {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what)
      : Error(ErrorCategory::Validation, "bad configuration: " + what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::Io, what) {}
};

}  // namespace specmon
