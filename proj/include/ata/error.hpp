// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace ata {

enum class ErrorCode {
  domain_error,
  empty_history,
  insufficient_history,
  version_conflict,
  phase_violation,
  invariant_violation,
  unknown_run,
  backend_unreachable,
  schema_violation_exhausted,
  timeout,
  invalid_config,
  unreachable,
  registration,
  channel_closed,
  search_unavailable,
  all_rejected,
  invalid_rubric,
  precondition,
  no_scored_scenarios,
  already_judged,
  io,
};

std::string_view to_string(ErrorCode code);

/// Exception type used across the harness. `details` carries structured
/// context (for example every raw model reply of an exhausted repair loop).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        nlohmann::json details = nullptr)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  nlohmann::json details_;
};

}  // namespace ata
