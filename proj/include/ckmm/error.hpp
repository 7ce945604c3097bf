#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ckmm {

enum class ErrorCode {
  invalid_dimension,
  invalid_input,
  domain,
  degenerate_cluster,
  singular_correlation,
  inconsistent_blocks,
  infeasible_scenario,
  numerical_underflow,
  format,
  parse,
  unsupported_unbalanced,
  io,
  config,
};

/// Stable machine-readable name, used by the CLI for its single-line error output.
std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace ckmm
