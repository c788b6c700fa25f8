#ifndef BTINF_ERROR_HPP
#define BTINF_ERROR_HPP

#include <stdexcept>
#include <string>

namespace btinf {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  non_finite,
  unstable_system,
  asymmetric_input,
  indefinite_input,
  rank_deficient,
  incompatible_prior,
  over_truncation,
  empty_schedule,
  empty_measurements,
  parse_error,
  io_error,
  config_error,
  numerical_failure,
};

/// Machine-parsable category name, used by the CLI's one-line error report.
inline const char* category(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::non_finite: return "non-finite";
    case ErrorCode::unstable_system: return "unstable-system";
    case ErrorCode::asymmetric_input: return "asymmetric-input";
    case ErrorCode::indefinite_input: return "indefinite-input";
    case ErrorCode::rank_deficient: return "rank-deficient";
    case ErrorCode::incompatible_prior: return "incompatible-prior";
    case ErrorCode::over_truncation: return "over-truncation";
    case ErrorCode::empty_schedule: return "empty-schedule";
    case ErrorCode::empty_measurements: return "empty-measurements";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::config_error: return "config-error";
    case ErrorCode::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace btinf

#endif  // BTINF_ERROR_HPP
