#pragma once

#include <stdexcept>
#include <string>

namespace cellmotif {

/// Raised when a caller breaks a documented precondition (programming error).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Process exit codes. Each extraction failure mode has its own code.
enum class ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kInsufficientPeriodicity = 3,
  kImageTooSmall = 4,
  kMotifUnderdetermined = 5,
  kDivergence = 6,
  kLabelError = 7,
  kIoError = 8,
};

/// Base for recoverable failures of the extraction pipeline.
class ExtractionError : public std::runtime_error {
 public:
  ExtractionError(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class InsufficientPeriodicity : public ExtractionError {
 public:
  explicit InsufficientPeriodicity(const std::string& detail = {})
      : ExtractionError(ExitCode::kInsufficientPeriodicity,
                        detail.empty() ? "insufficient periodicity"
                                       : "insufficient periodicity: " + detail) {}
};

class ImageTooSmall : public ExtractionError {
 public:
  explicit ImageTooSmall(const std::string& detail = {})
      : ExtractionError(ExitCode::kImageTooSmall,
                        detail.empty() ? "image too small" : "image too small: " + detail) {}
};

class MotifUnderdetermined : public ExtractionError {
 public:
  explicit MotifUnderdetermined(const std::string& detail)
      : ExtractionError(ExitCode::kMotifUnderdetermined, "motif underdetermined: " + detail) {}
};

class Divergence : public ExtractionError {
 public:
  explicit Divergence(const std::string& detail)
      : ExtractionError(ExitCode::kDivergence, "divergence: " + detail) {}
};

class LabelError : public ExtractionError {
 public:
  explicit LabelError(const std::string& detail)
      : ExtractionError(ExitCode::kLabelError, detail) {}
};

class IoError : public ExtractionError {
 public:
  explicit IoError(const std::string& detail) : ExtractionError(ExitCode::kIoError, detail) {}
};

inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace cellmotif
