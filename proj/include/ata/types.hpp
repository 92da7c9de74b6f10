// SPDX-License-Identifier: Apache-2.0
//
// Domain records shared by every stage of a run. All of them serialize to
// JSON through the to_json/from_json overloads below; RunState is the single
// document persisted per run.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ata/difficulty.hpp"

namespace ata {

using nlohmann::json;

enum class Phase {
  selecting,
  analyzing,
  interviewing,
  searching,
  hypothesizing,
  awaiting_approval,
  testing,
  reporting,
  done,
  failed,
};

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view name);

/// Forward moves (including skips) and any move to `failed` are allowed.
bool phase_transition_allowed(Phase from, Phase to);

struct QaPair {
  std::string question;
  std::string answer;

  friend bool operator==(const QaPair&, const QaPair&) = default;
};

enum class NodeKind { dialogue_state, tool_call, memory_access, exception_handler };

struct GraphNode {
  std::string id;
  NodeKind kind = NodeKind::dialogue_state;
  std::string location;

  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct GraphEdge {
  std::string from;
  std::string to;
  std::string condition;

  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

/// Symbolic graph of the agent's control flow. Nodes are kept sorted by id and
/// edges by (from, to, condition) so serialization is canonical.
struct AgentGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  std::vector<std::string> entry_nodes;

  bool has_node(std::string_view id) const;
  const GraphNode* find(std::string_view id) const;
  void normalize();

  friend bool operator==(const AgentGraph&, const AgentGraph&) = default;
};

struct CodeAnalysis {
  AgentGraph graph;
  std::string findings;
  std::vector<std::string> structural_findings;
  std::vector<std::string> warnings;

  friend bool operator==(const CodeAnalysis&, const CodeAnalysis&) = default;
};

enum class SourceKind { paper, dataset, bug_report };

struct EvidenceItem {
  std::string query;
  SourceKind source_kind = SourceKind::paper;
  std::string title;
  std::string summary;
  int iteration = 1;

  friend bool operator==(const EvidenceItem&, const EvidenceItem&) = default;
};

struct RubricLevel {
  std::string label;
  double score = 0;        // native scale of the rubric (e.g. -1..3)
  std::string descriptor;
  double judge_score = 1;  // position on the 1-5 judge scale

  friend bool operator==(const RubricLevel&, const RubricLevel&) = default;
};

struct RubricCriterion {
  std::string name;
  std::string description;
  std::vector<RubricLevel> levels;
  double score_min = 1;
  double score_max = 5;
  double weight = 1;

  friend bool operator==(const RubricCriterion&, const RubricCriterion&) = default;
};

struct Rubric {
  std::string rubric_id;
  std::vector<RubricCriterion> criteria;
  std::string overall_scale;

  std::vector<std::string> criterion_names() const;

  friend bool operator==(const Rubric&, const Rubric&) = default;
};

enum class WeaknessStatus { proposed, approved, revised, rejected };

struct Weakness {
  std::string weakness_id;
  std::string name;
  std::string trigger_conditions;
  std::string expected_failure;
  std::string manifestation;
  std::map<std::string, std::string> example_tests;  // band name -> sketch
  WeaknessStatus status = WeaknessStatus::proposed;
  std::vector<std::string> provenance;  // "answer:N", "code:N", "evidence:N"

  bool is_active() const {
    return status == WeaknessStatus::approved || status == WeaknessStatus::revised;
  }

  friend bool operator==(const Weakness&, const Weakness&) = default;
};

struct Persona {
  std::string attitude;
  std::string goal;
  std::string tone;

  friend bool operator==(const Persona&, const Persona&) = default;
};

enum class Speaker { simulated_user, aut };
enum class TurnStatus { ok, crash, null_reply, timeout };

struct Turn {
  Speaker speaker = Speaker::simulated_user;
  std::string text;
  TurnStatus status = TurnStatus::ok;

  friend bool operator==(const Turn&, const Turn&) = default;
};

enum class Outcome { completed, early_success, early_failure };

struct CriterionScore {
  double score = 1;
  std::string reasoning;

  friend bool operator==(const CriterionScore&, const CriterionScore&) = default;
};

struct Observations {
  std::vector<std::string> strengths;
  std::vector<std::string> weaknesses;
  std::vector<std::string> dialogue_examples;
  std::string guidance;

  friend bool operator==(const Observations&, const Observations&) = default;
};

struct JudgeResult {
  std::map<std::string, CriterionScore> criterion_scores;
  double overall = 1;
  Observations observations;

  friend bool operator==(const JudgeResult&, const JudgeResult&) = default;
};

struct TestScenario {
  std::string scenario_id;
  std::string weakness_id;
  int index = 1;
  double difficulty = kInitialDifficulty;
  Band band = Band::medium;
  Persona persona;
  std::string opening_prompt;
  int turn_limit = 9;
  std::vector<std::string> evaluation_criteria;
  std::vector<Turn> transcript;
  std::optional<Outcome> outcome;
  std::optional<JudgeResult> judge_result;

  int user_turns() const;
  /// Scored scenarios contribute a (d, s) pair to the weakness history.
  bool is_scored() const {
    return judge_result.has_value() && outcome.has_value() &&
           *outcome != Outcome::early_failure;
  }

  friend bool operator==(const TestScenario&, const TestScenario&) = default;
};

struct WeaknessSummary {
  std::string name;
  std::optional<double> final_score;
  int scenario_count = 0;
  int scored_count = 0;
  int early_failure_count = 0;
  std::vector<double> scores;
  std::vector<double> difficulties;
  std::string pattern_notes;

  friend bool operator==(const WeaknessSummary&, const WeaknessSummary&) = default;
};

struct ReportTotals {
  int scenarios_tested = 0;
  int scored_scenarios = 0;
  int early_failures = 0;
  double mean_score = 0;
  double mean_difficulty = 0;

  friend bool operator==(const ReportTotals&, const ReportTotals&) = default;
};

struct Report {
  std::string executive_summary;
  double overall_score = 0;
  std::map<std::string, WeaknessSummary> per_weakness;
  ReportTotals totals;
  std::vector<std::string> test_summaries;
  std::vector<std::string> identified_patterns;
  std::vector<std::string> code_recommendations;
  std::vector<std::string> priority_improvements;
  std::vector<std::string> skipped_stages;

  friend bool operator==(const Report&, const Report&) = default;
};

struct RunSettings {
  int max_weaknesses = 5;
  int k_max = 3;
  double epsilon = kDefaultEpsilon;
  double eta = 3.0;
  bool ablate_evidence = false;
  std::uint64_t seed = 0;

  friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

struct RunState {
  std::string run_id;
  std::string aut_ref;
  std::string testing_focus;
  RunSettings settings;
  std::vector<QaPair> user_answers;
  std::optional<std::string> pending_question;
  std::optional<CodeAnalysis> code_analysis;
  std::vector<EvidenceItem> search_findings;
  std::optional<Rubric> rubric;
  std::vector<Weakness> weaknesses;
  std::map<std::string, std::vector<TestScenario>> scenarios;
  std::optional<Report> report;
  Phase phase = Phase::selecting;
  std::optional<std::string> failure;

  const Weakness* find_weakness(std::string_view id) const;
  Weakness* find_weakness(std::string_view id);
  const TestScenario* find_scenario(std::string_view scenario_id) const;
  std::vector<const Weakness*> active_weaknesses() const;
  DifficultyParams difficulty_params() const;
  /// (d, s) pairs of the weakness's scored scenarios, in index order.
  DifficultyHistory history_of(std::string_view weakness_id) const;
};

NLOHMANN_JSON_SERIALIZE_ENUM(Phase, {
  {Phase::selecting, "selecting"},
  {Phase::analyzing, "analyzing"},
  {Phase::interviewing, "interviewing"},
  {Phase::searching, "searching"},
  {Phase::hypothesizing, "hypothesizing"},
  {Phase::awaiting_approval, "awaiting_approval"},
  {Phase::testing, "testing"},
  {Phase::reporting, "reporting"},
  {Phase::done, "done"},
  {Phase::failed, "failed"},
})
NLOHMANN_JSON_SERIALIZE_ENUM(Band, {
  {Band::easy, "easy"},
  {Band::medium, "medium"},
  {Band::hard, "hard"},
})
NLOHMANN_JSON_SERIALIZE_ENUM(NodeKind, {
  {NodeKind::dialogue_state, "dialogue_state"},
  {NodeKind::tool_call, "tool_call"},
  {NodeKind::memory_access, "memory_access"},
  {NodeKind::exception_handler, "exception_handler"},
})
NLOHMANN_JSON_SERIALIZE_ENUM(SourceKind, {
  {SourceKind::paper, "paper"},
  {SourceKind::dataset, "dataset"},
  {SourceKind::bug_report, "bug_report"},
})
NLOHMANN_JSON_SERIALIZE_ENUM(WeaknessStatus, {
  {WeaknessStatus::proposed, "proposed"},
  {WeaknessStatus::approved, "approved"},
  {WeaknessStatus::revised, "revised"},
  {WeaknessStatus::rejected, "rejected"},
})
NLOHMANN_JSON_SERIALIZE_ENUM(Speaker, {
  {Speaker::simulated_user, "simulated_user"},
  {Speaker::aut, "aut"},
})
NLOHMANN_JSON_SERIALIZE_ENUM(TurnStatus, {
  {TurnStatus::ok, "ok"},
  {TurnStatus::crash, "crash"},
  {TurnStatus::null_reply, "null_reply"},
  {TurnStatus::timeout, "timeout"},
})
NLOHMANN_JSON_SERIALIZE_ENUM(Outcome, {
  {Outcome::completed, "completed"},
  {Outcome::early_success, "early_success"},
  {Outcome::early_failure, "early_failure"},
})

#define ATA_DECLARE_JSON(T)          \
  void to_json(json& j, const T& v); \
  void from_json(const json& j, T& v);

ATA_DECLARE_JSON(QaPair)
ATA_DECLARE_JSON(GraphNode)
ATA_DECLARE_JSON(GraphEdge)
ATA_DECLARE_JSON(AgentGraph)
ATA_DECLARE_JSON(CodeAnalysis)
ATA_DECLARE_JSON(EvidenceItem)
ATA_DECLARE_JSON(RubricLevel)
ATA_DECLARE_JSON(RubricCriterion)
ATA_DECLARE_JSON(Rubric)
ATA_DECLARE_JSON(Weakness)
ATA_DECLARE_JSON(Persona)
ATA_DECLARE_JSON(Turn)
ATA_DECLARE_JSON(CriterionScore)
ATA_DECLARE_JSON(Observations)
ATA_DECLARE_JSON(JudgeResult)
ATA_DECLARE_JSON(TestScenario)
ATA_DECLARE_JSON(WeaknessSummary)
ATA_DECLARE_JSON(ReportTotals)
ATA_DECLARE_JSON(Report)
ATA_DECLARE_JSON(RunSettings)
ATA_DECLARE_JSON(RunState)

#undef ATA_DECLARE_JSON

std::string_view to_string(NodeKind kind);
std::string_view to_string(SourceKind kind);
std::string_view to_string(WeaknessStatus status);
std::string_view to_string(Speaker speaker);
std::string_view to_string(TurnStatus status);
std::string_view to_string(Outcome outcome);
NodeKind node_kind_from_string(std::string_view name);
SourceKind source_kind_from_string(std::string_view name);

/// Canonical text form: object keys sorted, no insignificant whitespace.
std::string canonical_dump(const json& value);
std::string canonical_dump(const RunState& state);

/// 64-bit FNV-1a, lowercase hex. Stable across platforms and runs.
std::string fnv1a_hex(std::string_view text);
std::uint64_t fnv1a(std::string_view text);

}  // namespace ata
