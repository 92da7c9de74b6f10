// SPDX-License-Identifier: Apache-2.0
#include "ata/error.hpp"

namespace ata {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::domain_error: return "domain-error";
    case ErrorCode::empty_history: return "empty-history";
    case ErrorCode::insufficient_history: return "insufficient-history";
    case ErrorCode::version_conflict: return "version-conflict";
    case ErrorCode::phase_violation: return "phase-violation";
    case ErrorCode::invariant_violation: return "invariant-violation";
    case ErrorCode::unknown_run: return "unknown-run";
    case ErrorCode::backend_unreachable: return "backend-unreachable";
    case ErrorCode::schema_violation_exhausted: return "schema-violation-exhausted";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::invalid_config: return "invalid-config";
    case ErrorCode::unreachable: return "unreachable";
    case ErrorCode::registration: return "registration";
    case ErrorCode::channel_closed: return "channel-closed";
    case ErrorCode::search_unavailable: return "search-backend-unavailable";
    case ErrorCode::all_rejected: return "all-rejected";
    case ErrorCode::invalid_rubric: return "invalid-provided-rubric";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::no_scored_scenarios: return "no-scored-scenarios";
    case ErrorCode::already_judged: return "already-judged";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace ata
