// SPDX-License-Identifier: Apache-2.0
//
// Final report: numbers are computed here from the run state and injected
// into the model-written narrative, never taken from the model.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ata/llm_gateway.hpp"
#include "ata/state_store.hpp"
#include "ata/types.hpp"

namespace ata {

/// Numeric part of a report. per_weakness holds every active weakness;
/// pattern_notes stay empty.
struct ReportStatistics {
  double overall_score = 0;
  std::map<std::string, WeaknessSummary> per_weakness;
  ReportTotals totals;
};

/// Per weakness: final = posterior of its scored history. Overall = mean of
/// the finals that exist. Totals: scenarios_tested counts executed
/// scenarios; mean_score and mean_difficulty average scored ones.
/// Throws precondition outside reporting/done, no_scored_scenarios when no
/// scenario produced a (d, s) pair.
ReportStatistics aggregate_run(const RunState& state);

/// Shortest text that parses back to exactly `value`.
std::string format_number(double value);

/// Stages skipped by configuration ("code-analysis", "evidence-search").
std::vector<std::string> skipped_stages(const RunState& state);

/// Narrative sections by the report_light model, numbers injected through
/// {{placeholders}}; any other decimal the model writes is withheld.
Report compose_report(const ReportStatistics& statistics, const RunState& state, const ModelClient& model);

/// Replaces {{overall_score}}, {{mean_score}}, {{mean_difficulty}},
/// {{scenarios_tested}}, {{scored_scenarios}}, {{early_failures}} and
/// {{final:<weakness_id>}}; strips decimals that did not come from a
/// placeholder.
std::string inject_numbers(const std::string& text, const ReportStatistics& statistics);

std::string render_markdown(const Report& report, const RunState& state);

/// Empty when every number in the report (and its rendering) is recomputable
/// from `state` to 1e-9; otherwise one line per discrepancy.
std::vector<std::string> verify_report(const Report& report, const std::string& markdown, const RunState& state);

/// Schema of report.json.
const json& report_schema();

/// Answers a follow-up question from the report, derived facts and, for any
/// scenario the question names, a transcript excerpt. The exchange is
/// appended to the run's event log. Throws precondition before a report
/// exists.
std::string report_qa(StateStore& store, const std::string& run_id, const std::string& question,
                      const ModelClient& model);

}  // namespace ata
