// SPDX-License-Identifier: Apache-2.0
#include "ata/types.hpp"

#include <algorithm>
#include <tuple>

#include "ata/error.hpp"

namespace ata {
namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    out = it->get<T>();
  }
}

template <typename T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    out = it->get<T>();
  } else {
    out.reset();
  }
}

template <typename T>
json opt(const std::optional<T>& value) {
  return value ? json(*value) : json(nullptr);
}

// The enum macros silently map unknown names to the first enumerator; model
// output goes through these instead.
template <typename E>
E strict_enum(std::string_view name, const char* what) {
  json j = std::string(name);
  E value = j.get<E>();
  if (json(value).get<std::string>() != name) {
    throw Error(ErrorCode::domain_error,
                std::string("unknown ") + what + " '" + std::string(name) + "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::selecting: return "selecting";
    case Phase::analyzing: return "analyzing";
    case Phase::interviewing: return "interviewing";
    case Phase::searching: return "searching";
    case Phase::hypothesizing: return "hypothesizing";
    case Phase::awaiting_approval: return "awaiting_approval";
    case Phase::testing: return "testing";
    case Phase::reporting: return "reporting";
    case Phase::done: return "done";
    case Phase::failed: return "failed";
  }
  return "failed";
}

Phase phase_from_string(std::string_view name) {
  return strict_enum<Phase>(name, "phase");
}

bool phase_transition_allowed(Phase from, Phase to) {
  if (to == Phase::failed) return true;
  if (from == Phase::failed) return false;
  return static_cast<int>(to) >= static_cast<int>(from);
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::dialogue_state: return "dialogue_state";
    case NodeKind::tool_call: return "tool_call";
    case NodeKind::memory_access: return "memory_access";
    case NodeKind::exception_handler: return "exception_handler";
  }
  return "dialogue_state";
}

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::paper: return "paper";
    case SourceKind::dataset: return "dataset";
    case SourceKind::bug_report: return "bug_report";
  }
  return "paper";
}

std::string_view to_string(WeaknessStatus status) {
  switch (status) {
    case WeaknessStatus::proposed: return "proposed";
    case WeaknessStatus::approved: return "approved";
    case WeaknessStatus::revised: return "revised";
    case WeaknessStatus::rejected: return "rejected";
  }
  return "proposed";
}

std::string_view to_string(Speaker speaker) {
  return speaker == Speaker::aut ? "aut" : "simulated_user";
}

std::string_view to_string(TurnStatus status) {
  switch (status) {
    case TurnStatus::ok: return "ok";
    case TurnStatus::crash: return "crash";
    case TurnStatus::null_reply: return "null_reply";
    case TurnStatus::timeout: return "timeout";
  }
  return "ok";
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::completed: return "completed";
    case Outcome::early_success: return "early_success";
    case Outcome::early_failure: return "early_failure";
  }
  return "completed";
}

NodeKind node_kind_from_string(std::string_view name) {
  return strict_enum<NodeKind>(name, "node kind");
}

SourceKind source_kind_from_string(std::string_view name) {
  return strict_enum<SourceKind>(name, "source kind");
}

bool AgentGraph::has_node(std::string_view id) const { return find(id) != nullptr; }

const GraphNode* AgentGraph::find(std::string_view id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const GraphNode& n, std::string_view key) { return n.id < key; });
  if (it != nodes.end() && it->id == id) return &*it;
  // Not normalized yet.
  for (const auto& node : nodes) {
    if (node.id == id) return &node;
  }
  return nullptr;
}

void AgentGraph::normalize() {
  std::sort(nodes.begin(), nodes.end(),
            [](const GraphNode& a, const GraphNode& b) { return a.id < b.id; });
  nodes.erase(std::unique(nodes.begin(), nodes.end(),
                          [](const GraphNode& a, const GraphNode& b) { return a.id == b.id; }),
              nodes.end());
  auto key = [](const GraphEdge& e) { return std::tie(e.from, e.to, e.condition); };
  std::sort(edges.begin(), edges.end(),
            [&](const GraphEdge& a, const GraphEdge& b) { return key(a) < key(b); });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [&](const GraphEdge& a, const GraphEdge& b) { return key(a) == key(b); }),
              edges.end());
  std::sort(entry_nodes.begin(), entry_nodes.end());
  entry_nodes.erase(std::unique(entry_nodes.begin(), entry_nodes.end()), entry_nodes.end());
}

std::vector<std::string> Rubric::criterion_names() const {
  std::vector<std::string> names;
  names.reserve(criteria.size());
  for (const auto& c : criteria) names.push_back(c.name);
  return names;
}

int TestScenario::user_turns() const {
  return static_cast<int>(std::count_if(transcript.begin(), transcript.end(), [](const Turn& t) {
    return t.speaker == Speaker::simulated_user;
  }));
}

const Weakness* RunState::find_weakness(std::string_view id) const {
  for (const auto& w : weaknesses) {
    if (w.weakness_id == id) return &w;
  }
  return nullptr;
}

Weakness* RunState::find_weakness(std::string_view id) {
  for (auto& w : weaknesses) {
    if (w.weakness_id == id) return &w;
  }
  return nullptr;
}

const TestScenario* RunState::find_scenario(std::string_view scenario_id) const {
  for (const auto& [wid, list] : scenarios) {
    for (const auto& sc : list) {
      if (sc.scenario_id == scenario_id) return &sc;
    }
  }
  return nullptr;
}

std::vector<const Weakness*> RunState::active_weaknesses() const {
  std::vector<const Weakness*> out;
  for (const auto& w : weaknesses) {
    if (w.is_active()) out.push_back(&w);
  }
  return out;
}

DifficultyParams RunState::difficulty_params() const {
  DifficultyParams params;
  params.eta = settings.eta;
  return params;
}

DifficultyHistory RunState::history_of(std::string_view weakness_id) const {
  DifficultyHistory history(difficulty_params());
  if (auto it = scenarios.find(std::string(weakness_id)); it != scenarios.end()) {
    for (const auto& sc : it->second) {
      if (sc.is_scored()) history.append(sc.difficulty, sc.judge_result->overall);
    }
  }
  return history;
}

// --- JSON ------------------------------------------------------------------

void to_json(json& j, const QaPair& v) { j = {{"question", v.question}, {"answer", v.answer}}; }
void from_json(const json& j, QaPair& v) {
  read(j, "question", v.question);
  read(j, "answer", v.answer);
}

void to_json(json& j, const GraphNode& v) {
  j = {{"id", v.id}, {"kind", v.kind}, {"location", v.location}};
}
void from_json(const json& j, GraphNode& v) {
  v.id = j.at("id").get<std::string>();
  if (auto it = j.find("kind"); it != j.end()) {
    v.kind = node_kind_from_string(it->get<std::string>());
  }
  read(j, "location", v.location);
}

void to_json(json& j, const GraphEdge& v) {
  j = {{"from", v.from}, {"to", v.to}, {"condition", v.condition}};
}
void from_json(const json& j, GraphEdge& v) {
  v.from = j.at("from").get<std::string>();
  v.to = j.at("to").get<std::string>();
  read(j, "condition", v.condition);
}

void to_json(json& j, const AgentGraph& v) {
  j = {{"nodes", v.nodes}, {"edges", v.edges}, {"entry_nodes", v.entry_nodes}};
}
void from_json(const json& j, AgentGraph& v) {
  read(j, "nodes", v.nodes);
  read(j, "edges", v.edges);
  read(j, "entry_nodes", v.entry_nodes);
}

void to_json(json& j, const CodeAnalysis& v) {
  j = {{"graph", v.graph},
       {"findings", v.findings},
       {"structural_findings", v.structural_findings},
       {"warnings", v.warnings}};
}
void from_json(const json& j, CodeAnalysis& v) {
  read(j, "graph", v.graph);
  read(j, "findings", v.findings);
  read(j, "structural_findings", v.structural_findings);
  read(j, "warnings", v.warnings);
}

void to_json(json& j, const EvidenceItem& v) {
  j = {{"query", v.query},
       {"source_kind", v.source_kind},
       {"title", v.title},
       {"summary", v.summary},
       {"iteration", v.iteration}};
}
void from_json(const json& j, EvidenceItem& v) {
  read(j, "query", v.query);
  if (auto it = j.find("source_kind"); it != j.end()) {
    v.source_kind = source_kind_from_string(it->get<std::string>());
  }
  read(j, "title", v.title);
  read(j, "summary", v.summary);
  read(j, "iteration", v.iteration);
}

void to_json(json& j, const RubricLevel& v) {
  j = {{"label", v.label},
       {"score", v.score},
       {"descriptor", v.descriptor},
       {"judge_score", v.judge_score}};
}
void from_json(const json& j, RubricLevel& v) {
  read(j, "label", v.label);
  read(j, "score", v.score);
  read(j, "descriptor", v.descriptor);
  v.judge_score = v.score;
  read(j, "judge_score", v.judge_score);
}

void to_json(json& j, const RubricCriterion& v) {
  j = {{"name", v.name},
       {"description", v.description},
       {"levels", v.levels},
       {"score_range", {v.score_min, v.score_max}},
       {"weight", v.weight}};
}
void from_json(const json& j, RubricCriterion& v) {
  read(j, "name", v.name);
  read(j, "description", v.description);
  read(j, "levels", v.levels);
  if (auto it = j.find("score_range"); it != j.end() && it->is_array() && it->size() == 2) {
    v.score_min = (*it)[0].get<double>();
    v.score_max = (*it)[1].get<double>();
  }
  read(j, "weight", v.weight);
}

void to_json(json& j, const Rubric& v) {
  j = {{"rubric_id", v.rubric_id}, {"criteria", v.criteria}, {"overall_scale", v.overall_scale}};
}
void from_json(const json& j, Rubric& v) {
  read(j, "rubric_id", v.rubric_id);
  read(j, "criteria", v.criteria);
  read(j, "overall_scale", v.overall_scale);
}

void to_json(json& j, const Weakness& v) {
  j = {{"weakness_id", v.weakness_id},
       {"name", v.name},
       {"trigger_conditions", v.trigger_conditions},
       {"expected_failure", v.expected_failure},
       {"manifestation", v.manifestation},
       {"example_tests", v.example_tests},
       {"status", v.status},
       {"provenance", v.provenance}};
}
void from_json(const json& j, Weakness& v) {
  read(j, "weakness_id", v.weakness_id);
  read(j, "name", v.name);
  read(j, "trigger_conditions", v.trigger_conditions);
  read(j, "expected_failure", v.expected_failure);
  read(j, "manifestation", v.manifestation);
  read(j, "example_tests", v.example_tests);
  if (auto it = j.find("status"); it != j.end()) {
    v.status = strict_enum<WeaknessStatus>(it->get<std::string>(), "weakness status");
  }
  read(j, "provenance", v.provenance);
}

void to_json(json& j, const Persona& v) {
  j = {{"attitude", v.attitude}, {"goal", v.goal}, {"tone", v.tone}};
}
void from_json(const json& j, Persona& v) {
  read(j, "attitude", v.attitude);
  read(j, "goal", v.goal);
  read(j, "tone", v.tone);
}

void to_json(json& j, const Turn& v) {
  j = {{"speaker", v.speaker}, {"text", v.text}, {"status", v.status}};
}
void from_json(const json& j, Turn& v) {
  v.speaker = strict_enum<Speaker>(j.at("speaker").get<std::string>(), "speaker");
  read(j, "text", v.text);
  if (auto it = j.find("status"); it != j.end()) {
    v.status = strict_enum<TurnStatus>(it->get<std::string>(), "turn status");
  }
}

void to_json(json& j, const CriterionScore& v) {
  j = {{"score", v.score}, {"reasoning", v.reasoning}};
}
void from_json(const json& j, CriterionScore& v) {
  v.score = j.at("score").get<double>();
  read(j, "reasoning", v.reasoning);
}

void to_json(json& j, const Observations& v) {
  j = {{"strengths", v.strengths},
       {"weaknesses", v.weaknesses},
       {"dialogue_examples", v.dialogue_examples},
       {"guidance", v.guidance}};
}
void from_json(const json& j, Observations& v) {
  read(j, "strengths", v.strengths);
  read(j, "weaknesses", v.weaknesses);
  read(j, "dialogue_examples", v.dialogue_examples);
  read(j, "guidance", v.guidance);
}

void to_json(json& j, const JudgeResult& v) {
  j = {{"criterion_scores", v.criterion_scores},
       {"overall", v.overall},
       {"observations", v.observations}};
}
void from_json(const json& j, JudgeResult& v) {
  read(j, "criterion_scores", v.criterion_scores);
  read(j, "overall", v.overall);
  read(j, "observations", v.observations);
}

void to_json(json& j, const TestScenario& v) {
  j = {{"scenario_id", v.scenario_id},
       {"weakness_id", v.weakness_id},
       {"index", v.index},
       {"difficulty", v.difficulty},
       {"band", v.band},
       {"persona", v.persona},
       {"opening_prompt", v.opening_prompt},
       {"turn_limit", v.turn_limit},
       {"evaluation_criteria", v.evaluation_criteria},
       {"transcript", v.transcript},
       {"outcome", opt(v.outcome)},
       {"judge_result", opt(v.judge_result)}};
}
void from_json(const json& j, TestScenario& v) {
  read(j, "scenario_id", v.scenario_id);
  read(j, "weakness_id", v.weakness_id);
  read(j, "index", v.index);
  read(j, "difficulty", v.difficulty);
  if (auto it = j.find("band"); it != j.end()) {
    v.band = band_from_string(it->get<std::string>());
  }
  read(j, "persona", v.persona);
  read(j, "opening_prompt", v.opening_prompt);
  read(j, "turn_limit", v.turn_limit);
  read(j, "evaluation_criteria", v.evaluation_criteria);
  read(j, "transcript", v.transcript);
  if (auto it = j.find("outcome"); it != j.end() && !it->is_null()) {
    v.outcome = strict_enum<Outcome>(it->get<std::string>(), "outcome");
  } else {
    v.outcome.reset();
  }
  read(j, "judge_result", v.judge_result);
}

void to_json(json& j, const WeaknessSummary& v) {
  j = {{"name", v.name},
       {"final_score", opt(v.final_score)},
       {"scenario_count", v.scenario_count},
       {"scored_count", v.scored_count},
       {"early_failure_count", v.early_failure_count},
       {"scores", v.scores},
       {"difficulties", v.difficulties},
       {"pattern_notes", v.pattern_notes}};
}
void from_json(const json& j, WeaknessSummary& v) {
  read(j, "name", v.name);
  read(j, "final_score", v.final_score);
  read(j, "scenario_count", v.scenario_count);
  read(j, "scored_count", v.scored_count);
  read(j, "early_failure_count", v.early_failure_count);
  read(j, "scores", v.scores);
  read(j, "difficulties", v.difficulties);
  read(j, "pattern_notes", v.pattern_notes);
}

void to_json(json& j, const ReportTotals& v) {
  j = {{"scenarios_tested", v.scenarios_tested},
       {"scored_scenarios", v.scored_scenarios},
       {"early_failures", v.early_failures},
       {"mean_score", v.mean_score},
       {"mean_difficulty", v.mean_difficulty}};
}
void from_json(const json& j, ReportTotals& v) {
  read(j, "scenarios_tested", v.scenarios_tested);
  read(j, "scored_scenarios", v.scored_scenarios);
  read(j, "early_failures", v.early_failures);
  read(j, "mean_score", v.mean_score);
  read(j, "mean_difficulty", v.mean_difficulty);
}

void to_json(json& j, const Report& v) {
  j = {{"executive_summary", v.executive_summary},
       {"overall_score", v.overall_score},
       {"per_weakness", v.per_weakness},
       {"totals", v.totals},
       {"test_summaries", v.test_summaries},
       {"identified_patterns", v.identified_patterns},
       {"code_recommendations", v.code_recommendations},
       {"priority_improvements", v.priority_improvements},
       {"skipped_stages", v.skipped_stages}};
}
void from_json(const json& j, Report& v) {
  read(j, "executive_summary", v.executive_summary);
  read(j, "overall_score", v.overall_score);
  read(j, "per_weakness", v.per_weakness);
  read(j, "totals", v.totals);
  read(j, "test_summaries", v.test_summaries);
  read(j, "identified_patterns", v.identified_patterns);
  read(j, "code_recommendations", v.code_recommendations);
  read(j, "priority_improvements", v.priority_improvements);
  read(j, "skipped_stages", v.skipped_stages);
}

void to_json(json& j, const RunSettings& v) {
  j = {{"max_weaknesses", v.max_weaknesses},
       {"k_max", v.k_max},
       {"epsilon", v.epsilon},
       {"eta", v.eta},
       {"ablate_evidence", v.ablate_evidence},
       {"seed", v.seed}};
}
void from_json(const json& j, RunSettings& v) {
  read(j, "max_weaknesses", v.max_weaknesses);
  read(j, "k_max", v.k_max);
  read(j, "epsilon", v.epsilon);
  read(j, "eta", v.eta);
  read(j, "ablate_evidence", v.ablate_evidence);
  read(j, "seed", v.seed);
}

void to_json(json& j, const RunState& v) {
  j = {{"run_id", v.run_id},
       {"aut_ref", v.aut_ref},
       {"testing_focus", v.testing_focus},
       {"settings", v.settings},
       {"user_answers", v.user_answers},
       {"pending_question", opt(v.pending_question)},
       {"code_analysis", opt(v.code_analysis)},
       {"search_findings", v.search_findings},
       {"rubric", opt(v.rubric)},
       {"weaknesses", v.weaknesses},
       {"scenarios", v.scenarios},
       {"report", opt(v.report)},
       {"phase", v.phase},
       {"failure", opt(v.failure)}};
}
void from_json(const json& j, RunState& v) {
  read(j, "run_id", v.run_id);
  read(j, "aut_ref", v.aut_ref);
  read(j, "testing_focus", v.testing_focus);
  read(j, "settings", v.settings);
  read(j, "user_answers", v.user_answers);
  read(j, "pending_question", v.pending_question);
  read(j, "code_analysis", v.code_analysis);
  read(j, "search_findings", v.search_findings);
  read(j, "rubric", v.rubric);
  read(j, "weaknesses", v.weaknesses);
  read(j, "scenarios", v.scenarios);
  read(j, "report", v.report);
  if (auto it = j.find("phase"); it != j.end()) {
    v.phase = phase_from_string(it->get<std::string>());
  }
  read(j, "failure", v.failure);
}

std::string canonical_dump(const json& value) {
  // nlohmann::json objects are std::map backed, so keys already come out in
  // lexicographic order.
  return value.dump();
}

std::string canonical_dump(const RunState& state) { return canonical_dump(json(state)); }

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string fnv1a_hex(std::string_view text) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::uint64_t hash = fnv1a(text);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[hash & 0xF];
    hash >>= 4;
  }
  return out;
}

}  // namespace ata
