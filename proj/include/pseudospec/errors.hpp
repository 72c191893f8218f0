#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pseudospec {

enum class ErrorKind {
  InvalidArgument,
  SiteCountMismatch,
  SingularMetric,
  OddChain,
  ZeroScale,
  PTViolation,
  PairingFailure,
  DefectiveMatrix,
  GramSingular,
  ComplexEigenvalue,
  NearException,
  AmbiguousTracking,
  PrecisionLoss,
  UnresolvedClassification,
  CorrectorDivergence,
  NoTransition,
  ConfigError,
  IoError,
};

std::string_view error_name(ErrorKind kind);

// Every failure raised by the library carries a kind; what() starts with the
// kind name so that callers (and the CLI) can report it verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return error_name(kind_); }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

// Short "%.3g" rendering of numbers quoted in error details.
std::string short_number(double value);

}  // namespace pseudospec
