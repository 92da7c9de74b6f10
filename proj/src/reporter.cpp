// SPDX-License-Identifier: Apache-2.0
#include "ata/reporter.hpp"

#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "ata/error.hpp"
#include "ata/judge.hpp"
#include "ata/schema.hpp"

namespace ata {

namespace {

double mean(const std::vector<double>& values) {
  double sum = 0;
  for (double v : values) sum += v;
  return values.empty() ? 0 : sum / static_cast<double>(values.size());
}

const std::regex& decimal_pattern() {
  static const std::regex pattern(R"((^|[^\w.\-])(-?\d+\.\d+)(?!\w|\.\d))");
  return pattern;
}

std::string withhold_decimals(const std::string& text) {
  return std::regex_replace(text, decimal_pattern(), "$1[n/a]");
}

}  // namespace

std::string format_number(double value) { return json(value).dump(); }

ReportStatistics aggregate_run(const RunState& state) {
  if (state.phase != Phase::reporting && state.phase != Phase::done) {
    throw Error(ErrorCode::precondition, "statistics need a run in reporting, not " + std::string(to_string(state.phase)));
  }
  ReportStatistics stats;
  std::vector<double> finals;
  std::vector<double> all_scores;
  std::vector<double> all_difficulties;
  json failures = json::array();
  for (const Weakness* w : state.active_weaknesses()) {
    WeaknessSummary summary;
    summary.name = w->name;
    if (auto it = state.scenarios.find(w->weakness_id); it != state.scenarios.end()) {
      for (const auto& sc : it->second) {
        if (!sc.outcome) continue;
        ++summary.scenario_count;
        if (*sc.outcome == Outcome::early_failure) {
          ++summary.early_failure_count;
          failures.push_back({{"scenario_id", sc.scenario_id}, {"failure", failure_status_line(sc)}});
        }
        if (sc.is_scored()) {
          ++summary.scored_count;
          summary.scores.push_back(sc.judge_result->overall);
          summary.difficulties.push_back(sc.difficulty);
        }
      }
    }
    if (summary.scored_count > 0) {
      summary.final_score = posterior(state.history_of(w->weakness_id));
      finals.push_back(*summary.final_score);
    }
    all_scores.insert(all_scores.end(), summary.scores.begin(), summary.scores.end());
    all_difficulties.insert(all_difficulties.end(), summary.difficulties.begin(), summary.difficulties.end());
    stats.totals.scenarios_tested += summary.scenario_count;
    stats.totals.scored_scenarios += summary.scored_count;
    stats.totals.early_failures += summary.early_failure_count;
    stats.per_weakness[w->weakness_id] = std::move(summary);
  }
  if (finals.empty()) {
    throw Error(ErrorCode::no_scored_scenarios,
                std::to_string(stats.totals.scenarios_tested) + " scenario(s) ran, none produced a score",
                {{"scenarios_tested", stats.totals.scenarios_tested}, {"early_failures", failures}});
  }
  stats.overall_score = mean(finals);
  stats.totals.mean_score = mean(all_scores);
  stats.totals.mean_difficulty = mean(all_difficulties);
  return stats;
}

std::vector<std::string> skipped_stages(const RunState& state) {
  if (!state.settings.ablate_evidence) return {};
  return {"code-analysis", "evidence-search"};
}

std::string inject_numbers(const std::string& text, const ReportStatistics& statistics) {
  static const std::regex placeholder(R"(\{\{\s*([a-z_]+)(?::([A-Za-z0-9_\-]+))?\s*\}\})");
  // Placeholders first become sentinels so the decimal scrub cannot touch them.
  std::vector<std::string> values;
  std::string out;
  auto begin = std::sregex_iterator(text.begin(), text.end(), placeholder);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out += text.substr(last, static_cast<std::size_t>(m.position()) - last);
    last = static_cast<std::size_t>(m.position() + m.length());
    const std::string name = m[1].str();
    std::string value = "[n/a]";
    if (name == "overall_score") value = format_number(statistics.overall_score);
    else if (name == "mean_score") value = format_number(statistics.totals.mean_score);
    else if (name == "mean_difficulty") value = format_number(statistics.totals.mean_difficulty);
    else if (name == "scenarios_tested") value = std::to_string(statistics.totals.scenarios_tested);
    else if (name == "scored_scenarios") value = std::to_string(statistics.totals.scored_scenarios);
    else if (name == "early_failures") value = std::to_string(statistics.totals.early_failures);
    else if (name == "final" && m[2].matched) {
      auto w = statistics.per_weakness.find(m[2].str());
      if (w != statistics.per_weakness.end() && w->second.final_score) value = format_number(*w->second.final_score);
    }
    out += "\x01" + std::to_string(values.size()) + "\x02";
    values.push_back(std::move(value));
  }
  out += text.substr(last);
  out = withhold_decimals(out);
  std::string result;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == '\x01') {
      const auto end = out.find('\x02', i);
      result += values[std::stoul(out.substr(i + 1, end - i - 1))];
      i = end;
    } else {
      result += out[i];
    }
  }
  return result;
}

const json& report_schema() {
  static const json schema = json::parse(R"({
    "type": "object",
    "required": ["executive_summary", "overall_score", "per_weakness", "totals", "test_summaries",
                 "identified_patterns", "code_recommendations", "priority_improvements", "skipped_stages"],
    "additionalProperties": false,
    "properties": {
      "executive_summary": {"type": "string", "minLength": 1},
      "overall_score": {"type": "number", "minimum": 1, "maximum": 10},
      "per_weakness": {"type": "object", "additionalProperties": {
        "type": "object",
        "required": ["name", "final_score", "scenario_count", "scored_count", "early_failure_count",
                     "scores", "difficulties", "pattern_notes"],
        "properties": {
          "name": {"type": "string"},
          "final_score": {"type": ["number", "null"], "minimum": 1, "maximum": 10},
          "scenario_count": {"type": "integer", "minimum": 0},
          "scored_count": {"type": "integer", "minimum": 0},
          "early_failure_count": {"type": "integer", "minimum": 0},
          "scores": {"type": "array", "items": {"type": "number", "minimum": 1, "maximum": 10}},
          "difficulties": {"type": "array", "items": {"type": "number", "minimum": 1, "maximum": 10}},
          "pattern_notes": {"type": "string"}}}},
      "totals": {"type": "object",
        "required": ["scenarios_tested", "scored_scenarios", "early_failures", "mean_score", "mean_difficulty"],
        "properties": {
          "scenarios_tested": {"type": "integer", "minimum": 0},
          "scored_scenarios": {"type": "integer", "minimum": 0},
          "early_failures": {"type": "integer", "minimum": 0},
          "mean_score": {"type": "number"},
          "mean_difficulty": {"type": "number"}}},
      "test_summaries": {"type": "array", "items": {"type": "string"}},
      "identified_patterns": {"type": "array", "items": {"type": "string"}},
      "code_recommendations": {"type": "array", "items": {"type": "string"}},
      "priority_improvements": {"type": "array", "items": {"type": "string"}},
      "skipped_stages": {"type": "array", "items": {"type": "string"}}
    }})");
  return schema;
}

Report compose_report(const ReportStatistics& statistics, const RunState& state, const ModelClient& model) {
  json weaknesses = json::array();
  for (const auto& [wid, summary] : statistics.per_weakness) {
    const Weakness* w = state.find_weakness(wid);
    weaknesses.push_back({{"weakness_id", wid},
                          {"name", summary.name},
                          {"expected_failure", w ? w->expected_failure : ""},
                          {"final_placeholder", "{{final:" + wid + "}}"},
                          {"final_score", summary.final_score ? json(*summary.final_score) : json(nullptr)},
                          {"scenario_count", summary.scenario_count},
                          {"early_failure_count", summary.early_failure_count}});
  }
  json tests = json::array();
  for (const auto& [wid, list] : state.scenarios) {
    for (const auto& sc : list) {
      if (!sc.outcome) continue;
      json t = {{"scenario_id", sc.scenario_id},
                {"weakness_id", wid},
                {"band", sc.band},
                {"persona", sc.persona},
                {"outcome", *sc.outcome}};
      if (sc.judge_result) {
        t["score"] = sc.judge_result->overall;
        t["observations"] = sc.judge_result->observations;
      }
      tests.push_back(std::move(t));
    }
  }
  json context = {{"aut", state.aut_ref},
                  {"testing_focus", state.testing_focus},
                  {"user_answers", state.user_answers},
                  {"weaknesses", weaknesses},
                  {"tests", tests},
                  {"overall_score", statistics.overall_score},
                  {"placeholders",
                   {"{{overall_score}}", "{{mean_score}}", "{{mean_difficulty}}", "{{scenarios_tested}}",
                    "{{scored_scenarios}}", "{{early_failures}}", "{{final:<weakness_id>}}"}},
                  {"skipped_stages", skipped_stages(state)}};
  if (state.code_analysis) {
    context["code_findings"] = state.code_analysis->findings;
  }
  const json string_list = {{"type", "array"}, {"items", {{"type", "string"}}}};
  const json schema = {
      {"type", "object"},
      {"required",
       {"executive_summary", "test_summaries", "identified_patterns", "code_recommendations", "priority_improvements",
        "pattern_notes"}},
      {"properties",
       {{"executive_summary", {{"type", "string"}, {"minLength", 1}}},
        {"test_summaries", string_list},
        {"identified_patterns", string_list},
        {"code_recommendations", string_list},
        {"priority_improvements", string_list},
        {"pattern_notes", {{"type", "object"}}}}}};
  const json reply = model.complete_json(
      ModelRole::report_light,
      {{"system", "You write the final report of an adversarial test campaign against a conversational agent. " +
                      task_tag("compose_report")},
       {"user", with_context("Write the executive summary, one summary per test, identified patterns, code "
                             "recommendations and an ordered list of priority improvements, plus pattern notes per "
                             "weakness id. Never write a score or statistic yourself: refer to numbers only through "
                             "the listed {{placeholders}}.",
                             context)}},
      schema);

  Report report;
  auto narrate = [&](const json& value) { return inject_numbers(value.get<std::string>(), statistics); };
  auto narrate_list = [&](const json& list) {
    std::vector<std::string> out;
    for (const auto& item : list) out.push_back(narrate(item));
    return out;
  };
  report.executive_summary = narrate(reply["executive_summary"]);
  report.test_summaries = narrate_list(reply["test_summaries"]);
  report.identified_patterns = narrate_list(reply["identified_patterns"]);
  report.code_recommendations = narrate_list(reply["code_recommendations"]);
  report.priority_improvements = narrate_list(reply["priority_improvements"]);
  report.overall_score = statistics.overall_score;
  report.totals = statistics.totals;
  report.per_weakness = statistics.per_weakness;
  for (auto& [wid, summary] : report.per_weakness) {
    const json& notes = reply["pattern_notes"];
    if (notes.contains(wid) && notes[wid].is_string()) summary.pattern_notes = narrate(notes[wid]);
  }
  report.skipped_stages = skipped_stages(state);
  return report;
}

std::string render_markdown(const Report& report, const RunState& state) {
  std::ostringstream md;
  md << "# Test report: " << state.aut_ref << "\n\n";
  md << "## Executive summary\n\n" << report.executive_summary << "\n\n";
  md << "## Overall score\n\n**" << format_number(report.overall_score) << "** / 10 (mean of per-weakness finals)\n\n";
  md << "## Scores by weakness\n\n";
  md << "| Weakness | Name | Final score | Scenarios | Scored | Early failures |\n";
  md << "|---|---|---|---|---|---|\n";
  for (const auto& [wid, s] : report.per_weakness) {
    md << "| " << wid << " | " << s.name << " | " << (s.final_score ? format_number(*s.final_score) : "n/a") << " | "
       << s.scenario_count << " | " << s.scored_count << " | " << s.early_failure_count << " |\n";
  }
  md << "\n";
  for (const auto& [wid, s] : report.per_weakness) {
    md << "### " << wid << ": " << s.name << "\n\n";
    md << "- difficulties: ";
    for (std::size_t i = 0; i < s.difficulties.size(); ++i) md << (i ? ", " : "") << format_number(s.difficulties[i]);
    md << "\n- scores: ";
    for (std::size_t i = 0; i < s.scores.size(); ++i) md << (i ? ", " : "") << format_number(s.scores[i]);
    md << "\n";
    if (!s.pattern_notes.empty()) md << "- patterns: " << s.pattern_notes << "\n";
    md << "\n";
  }
  md << "## Totals\n\n";
  md << "- scenarios tested: " << report.totals.scenarios_tested << "\n";
  md << "- scored scenarios: " << report.totals.scored_scenarios << "\n";
  md << "- early failures: " << report.totals.early_failures << "\n";
  md << "- mean score: " << format_number(report.totals.mean_score) << "\n";
  md << "- mean difficulty: " << format_number(report.totals.mean_difficulty) << "\n\n";
  auto section = [&](const char* title, const std::vector<std::string>& items, bool ordered) {
    md << "## " << title << "\n\n";
    if (items.empty()) md << "None.\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
      md << (ordered ? std::to_string(i + 1) + ". " : std::string("- ")) << items[i] << "\n";
    }
    md << "\n";
  };
  section("Test summaries", report.test_summaries, false);
  section("Identified patterns", report.identified_patterns, false);
  section("Code recommendations", report.code_recommendations, false);
  section("Priority improvements", report.priority_improvements, true);
  md << "## Methodology\n\n";
  if (report.skipped_stages.empty()) {
    md << "All stages ran: code analysis, designer interview, evidence search, weakness generation, adaptive "
          "testing, judging.\n";
  } else {
    md << "Skipped stages (ablated configuration): ";
    for (std::size_t i = 0; i < report.skipped_stages.size(); ++i) md << (i ? ", " : "") << report.skipped_stages[i];
    md << ".\n";
  }
  return md.str();
}

std::vector<std::string> verify_report(const Report& report, const std::string& markdown, const RunState& state) {
  std::vector<std::string> problems;
  for (const auto& e : schema::validate(json(report), report_schema())) problems.push_back("schema: " + e);
  ReportStatistics stats;
  try {
    stats = aggregate_run(state);
  } catch (const Error& e) {
    problems.push_back(std::string("statistics: ") + e.what());
    return problems;
  }
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-9; };
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  check(near(report.overall_score, stats.overall_score), "overall_score differs from state");
  check(report.totals.scenarios_tested == stats.totals.scenarios_tested, "scenarios_tested differs");
  check(report.totals.scored_scenarios == stats.totals.scored_scenarios, "scored_scenarios differs");
  check(report.totals.early_failures == stats.totals.early_failures, "early_failures differs");
  check(near(report.totals.mean_score, stats.totals.mean_score), "mean_score differs");
  check(near(report.totals.mean_difficulty, stats.totals.mean_difficulty), "mean_difficulty differs");
  check(report.per_weakness.size() == stats.per_weakness.size(), "per_weakness keys differ from active weaknesses");
  std::vector<double> allowed = {stats.overall_score, stats.totals.mean_score, stats.totals.mean_difficulty};
  for (const auto& [wid, expected] : stats.per_weakness) {
    auto it = report.per_weakness.find(wid);
    if (it == report.per_weakness.end()) {
      problems.push_back("missing weakness " + wid);
      continue;
    }
    const auto& got = it->second;
    check(got.final_score.has_value() == expected.final_score.has_value() &&
              (!got.final_score || near(*got.final_score, *expected.final_score)),
          wid + ": final score differs");
    check(got.scenario_count == expected.scenario_count && got.scored_count == expected.scored_count &&
              got.early_failure_count == expected.early_failure_count,
          wid + ": counts differ");
    bool same = got.scores.size() == expected.scores.size() && got.difficulties.size() == expected.difficulties.size();
    for (std::size_t i = 0; same && i < got.scores.size(); ++i) {
      same = near(got.scores[i], expected.scores[i]) && near(got.difficulties[i], expected.difficulties[i]);
    }
    check(same, wid + ": score or difficulty lists differ");
    if (expected.final_score) allowed.push_back(*expected.final_score);
    allowed.insert(allowed.end(), expected.scores.begin(), expected.scores.end());
    allowed.insert(allowed.end(), expected.difficulties.begin(), expected.difficulties.end());
  }
  // Every decimal in the rendering must be one of the recomputed values.
  for (auto it = std::sregex_iterator(markdown.begin(), markdown.end(), decimal_pattern());
       it != std::sregex_iterator(); ++it) {
    const double value = std::stod((*it)[2].str());
    bool found = false;
    for (double a : allowed) found = found || near(a, value);
    if (!found) problems.push_back("rendered number " + (*it)[2].str() + " is not recomputable from state");
  }
  return problems;
}

std::string report_qa(StateStore& store, const std::string& run_id, const std::string& question,
                      const ModelClient& model) {
  const RunState state = store.snapshot(run_id);
  if (!state.report) throw Error(ErrorCode::precondition, "no report yet for run " + run_id);
  const Report& report = *state.report;

  json facts = json::object();
  const std::pair<const std::string, WeaknessSummary>* lowest = nullptr;
  const std::pair<const std::string, WeaknessSummary>* highest = nullptr;
  for (const auto& entry : report.per_weakness) {
    if (!entry.second.final_score) continue;
    if (!lowest || *entry.second.final_score < *lowest->second.final_score) lowest = &entry;
    if (!highest || *entry.second.final_score > *highest->second.final_score) highest = &entry;
  }
  auto describe = [](const auto* entry) {
    return json{{"weakness_id", entry->first}, {"name", entry->second.name}, {"final_score", *entry->second.final_score}};
  };
  if (lowest) facts["lowest_weakness"] = describe(lowest);
  if (highest) facts["highest_weakness"] = describe(highest);
  facts["overall_score"] = report.overall_score;
  facts["scenarios_tested"] = report.totals.scenarios_tested;
  facts["early_failures"] = report.totals.early_failures;

  json excerpts = json::array();
  for (const auto& [wid, list] : state.scenarios) {
    for (const auto& sc : list) {
      if (question.find(sc.scenario_id) == std::string::npos) continue;
      json turns = json::array();
      for (const auto& t : sc.transcript) turns.push_back(t);
      excerpts.push_back({{"scenario_id", sc.scenario_id},
                          {"persona", sc.persona},
                          {"difficulty", sc.difficulty},
                          {"outcome", sc.outcome ? json(*sc.outcome) : json(nullptr)},
                          {"score", sc.judge_result ? json(sc.judge_result->overall) : json(nullptr)},
                          {"transcript", turns}});
    }
  }
  const json context = {{"question", question}, {"report", report}, {"facts", facts}, {"transcripts", excerpts}};
  const json reply = model.complete_json(
      ModelRole::report_light,
      {{"system", "You answer the agent designer's questions about a finished test campaign, citing the report and "
                  "transcripts. " + task_tag("report_qa")},
       {"user", with_context("Answer the question. Use only the supplied facts for numbers. Reply {\"answer\": "
                             "\"...\"}.",
                             context)}},
      json{{"type", "object"}, {"required", {"answer"}}, {"properties", {{"answer", {{"type", "string"}}}}}});
  std::string answer = reply["answer"].get<std::string>();
  store.append_event(run_id, "reporter", EventKind::user_input,
                     {{"kind", "qa"}, {"question", question}, {"answer", answer},
                      {"scenarios_in_context", excerpts.size()}});
  return answer;
}

}  // namespace ata
