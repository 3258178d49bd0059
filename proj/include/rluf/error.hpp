#pragma once

#include <stdexcept>
#include <string>

namespace rluf {

/// Error families; the CLI maps them onto its exit codes.
enum class ErrorKind {
  kUsage,         // bad flags or arguments (exit 1)
  kData,          // malformed input, config or schema problems (exit 2)
  kPrecondition,  // caller violated an operation precondition (exit 2)
  kNumerical,     // non-finite loss, undefined metric, separation (exit 3)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what) : Error(ErrorKind::kPrecondition, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::kNumerical, what) {}
};

/// Raised by metrics that are undefined on their input (single-class AUROC,
/// zero-variance Pearson).
class UndefinedMetricError : public NumericalError {
 public:
  explicit UndefinedMetricError(const std::string& what) : NumericalError(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw PreconditionError(what);
}

}  // namespace rluf
