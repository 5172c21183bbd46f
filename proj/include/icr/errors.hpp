#pragma once

#include <stdexcept>
#include <string>

namespace icr {

enum class ErrorKind {
  parse,
  validation,
  scope,
  support,
  all_zero_slice,
  unknown_block,
  instance_too_large,
  not_full_conditional,
  no_cycle,
  not_converged,
  inconsistent,
  phase,
};

/// Base of every error thrown by the library. `kind()` is stable and is what
/// the CLI maps to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

  const char* kind_name() const {
    switch (kind_) {
      case ErrorKind::parse: return "ParseError";
      case ErrorKind::validation: return "ValidationError";
      case ErrorKind::scope: return "ScopeError";
      case ErrorKind::support: return "SupportError";
      case ErrorKind::all_zero_slice: return "AllZeroSlice";
      case ErrorKind::unknown_block: return "UnknownBlock";
      case ErrorKind::instance_too_large: return "InstanceTooLarge";
      case ErrorKind::not_full_conditional: return "NotFullConditional";
      case ErrorKind::no_cycle: return "NoCycle";
      case ErrorKind::not_converged: return "NonConvergence";
      case ErrorKind::inconsistent: return "Inconsistent";
      case ErrorKind::phase: return "PhaseError";
    }
    return "Error";
  }

 private:
  ErrorKind kind_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(ErrorKind::parse, w) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error(ErrorKind::validation, w) {}
};
struct ScopeError : Error {
  explicit ScopeError(const std::string& w) : Error(ErrorKind::scope, w) {}
};
struct SupportError : Error {
  explicit SupportError(const std::string& w) : Error(ErrorKind::support, w) {}
};
struct AllZeroSliceError : Error {
  explicit AllZeroSliceError(const std::string& w) : Error(ErrorKind::all_zero_slice, w) {}
};
struct UnknownBlockError : Error {
  explicit UnknownBlockError(const std::string& w) : Error(ErrorKind::unknown_block, w) {}
};
struct InstanceTooLargeError : Error {
  explicit InstanceTooLargeError(const std::string& w) : Error(ErrorKind::instance_too_large, w) {}
};
struct NotFullConditionalError : Error {
  explicit NotFullConditionalError(const std::string& w) : Error(ErrorKind::not_full_conditional, w) {}
};
struct NoCycleError : Error {
  explicit NoCycleError(const std::string& w) : Error(ErrorKind::no_cycle, w) {}
};
struct NotConvergedError : Error {
  explicit NotConvergedError(const std::string& w) : Error(ErrorKind::not_converged, w) {}
};
struct InconsistentError : Error {
  explicit InconsistentError(const std::string& w) : Error(ErrorKind::inconsistent, w) {}
};
struct PhaseError : Error {
  explicit PhaseError(const std::string& w) : Error(ErrorKind::phase, w) {}
};

}  // namespace icr
