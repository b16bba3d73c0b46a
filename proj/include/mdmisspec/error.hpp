#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mdm {

enum class ErrorCode {
  input,                 // malformed or dimension-mismatched arguments
  model_validation,      // W not SPD, X rank deficient, k < p
  domain,                // special-function argument outside its domain
  improper_prior,        // normalization or sampling requested from an improper family
  just_identified,       // k == p where k > p is required
  degenerate_limit,      // closed form presumes J > 0
  nonexistent_mean,      // posterior mean requested for dof <= 1
  grid,                  // grid posterior construction failed
  resample_required,     // degenerate simulated sample
  numerical,             // quadrature or root finding did not converge
  internal_consistency,  // an identity that must hold was violated
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::input: return "input";
    case ErrorCode::model_validation: return "model_validation";
    case ErrorCode::domain: return "domain";
    case ErrorCode::improper_prior: return "improper_prior";
    case ErrorCode::just_identified: return "just_identified";
    case ErrorCode::degenerate_limit: return "degenerate_limit";
    case ErrorCode::nonexistent_mean: return "nonexistent_mean";
    case ErrorCode::grid: return "grid";
    case ErrorCode::resample_required: return "resample_required";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::internal_consistency: return "internal_consistency";
  }
  return "unknown";
}

/// Numerical failures (as opposed to bad inputs) map to CLI exit code 2.
constexpr bool is_numerical(ErrorCode code) {
  return code == ErrorCode::numerical || code == ErrorCode::internal_consistency ||
         code == ErrorCode::resample_required;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace mdm
