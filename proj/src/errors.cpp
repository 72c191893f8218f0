#include "pseudospec/errors.hpp"

#include <cstdio>

namespace pseudospec {

std::string_view error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::SiteCountMismatch: return "SiteCountMismatch";
    case ErrorKind::SingularMetric: return "SingularMetric";
    case ErrorKind::OddChain: return "OddChain";
    case ErrorKind::ZeroScale: return "ZeroScale";
    case ErrorKind::PTViolation: return "PTViolation";
    case ErrorKind::PairingFailure: return "PairingFailure";
    case ErrorKind::DefectiveMatrix: return "DefectiveMatrix";
    case ErrorKind::GramSingular: return "GramSingular";
    case ErrorKind::ComplexEigenvalue: return "ComplexEigenvalue";
    case ErrorKind::NearException: return "NearException";
    case ErrorKind::AmbiguousTracking: return "AmbiguousTracking";
    case ErrorKind::PrecisionLoss: return "PrecisionLoss";
    case ErrorKind::UnresolvedClassification: return "UnresolvedClassification";
    case ErrorKind::CorrectorDivergence: return "CorrectorDivergence";
    case ErrorKind::NoTransition: return "NoTransition";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(error_name(kind)) + ": " + detail),
      kind_(kind),
      detail_(detail) {}

std::string short_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", value);
  return buf;
}

}  // namespace pseudospec
