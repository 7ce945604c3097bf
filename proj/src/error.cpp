#include "ckmm/error.hpp"

namespace ckmm {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_dimension: return "invalid_dimension";
    case ErrorCode::invalid_input: return "invalid_input";
    case ErrorCode::domain: return "domain";
    case ErrorCode::degenerate_cluster: return "degenerate_cluster";
    case ErrorCode::singular_correlation: return "singular_correlation";
    case ErrorCode::inconsistent_blocks: return "inconsistent_blocks";
    case ErrorCode::infeasible_scenario: return "infeasible_scenario";
    case ErrorCode::numerical_underflow: return "numerical_underflow";
    case ErrorCode::format: return "format";
    case ErrorCode::parse: return "parse";
    case ErrorCode::unsupported_unbalanced: return "unsupported_unbalanced";
    case ErrorCode::io: return "io";
    case ErrorCode::config: return "config";
  }
  return "unknown";
}

}  // namespace ckmm
