// SPDX-License-Identifier: Apache-2.0
#include "ata/judge.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ata/error.hpp"

namespace ata {

double aggregate(const std::vector<double>& scores, const std::vector<double>& weights) {
  if (scores.empty()) throw Error(ErrorCode::domain_error, "aggregate needs at least one criterion score");
  if (!weights.empty() && weights.size() != scores.size()) {
    throw Error(ErrorCode::domain_error, "one weight per criterion score");
  }
  double weighted = 0;
  double total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!std::isfinite(s) || s < kCriterionMin || s > kCriterionMax) {
      throw Error(ErrorCode::domain_error, "criterion score outside [1, 5]");
    }
    if (!std::isfinite(w) || !(w > 0)) throw Error(ErrorCode::domain_error, "criterion weight must be positive");
    weighted += w * s;
    total += w;
  }
  const double mean = weights.empty() ? weighted / static_cast<double>(scores.size()) : weighted / total;
  return std::clamp((mean - 1.0) * 9.0 / 4.0 + 1.0, 1.0, 10.0);
}

double aggregate(const std::map<std::string, CriterionScore>& scores, const Rubric& rubric) {
  std::vector<double> values;
  std::vector<double> weights;
  for (const auto& criterion : rubric.criteria) {
    auto it = scores.find(criterion.name);
    if (it == scores.end()) throw Error(ErrorCode::domain_error, "missing score for criterion " + criterion.name);
    values.push_back(it->second.score);
    weights.push_back(criterion.weight);
  }
  if (scores.size() != rubric.criteria.size()) {
    throw Error(ErrorCode::domain_error, "scores name criteria outside the rubric");
  }
  return aggregate(values, weights);
}

std::string failure_status_line(const TestScenario& scenario) {
  int turn = 0;
  for (const auto& t : scenario.transcript) {
    if (t.speaker == Speaker::simulated_user) ++turn;
    if (t.speaker == Speaker::aut && t.status != TurnStatus::ok) {
      return "AGENT FAILURE: status " + std::string(to_string(t.status)) + " on turn " + std::to_string(turn) +
             "; the dialogue ended early.";
    }
  }
  return {};
}

json judge_schema(const Rubric& rubric) {
  json properties = json::object();
  json required = json::array();
  for (const auto& c : rubric.criteria) {
    properties[c.name] = {{"type", "object"},
                          {"required", {"score", "reasoning"}},
                          {"properties",
                           {{"score", {{"type", "number"}, {"minimum", kCriterionMin}, {"maximum", kCriterionMax}}},
                            {"reasoning", {{"type", "string"}}}}}};
    required.push_back(c.name);
  }
  const json string_list = {{"type", "array"}, {"items", {{"type", "string"}}}};
  return {{"type", "object"},
          {"required", {"criterion_scores", "observations"}},
          {"properties",
           {{"criterion_scores",
             {{"type", "object"}, {"required", required}, {"properties", properties}, {"additionalProperties", false}}},
            {"observations",
             {{"type", "object"},
              {"required", {"strengths", "weaknesses", "dialogue_examples", "guidance"}},
              {"properties",
               {{"strengths", string_list},
                {"weaknesses", string_list},
                {"dialogue_examples", string_list},
                {"guidance", {{"type", "string"}}}}}}}}}};
}

JudgeResult evaluate(const TestScenario& scenario, const Rubric& rubric,
                     const std::vector<ChatMessage>& thread_context, const ModelClient& model) {
  if (!scenario.outcome) throw Error(ErrorCode::precondition, "scenario " + scenario.scenario_id + " has not run");
  json turns = json::array();
  for (const auto& t : scenario.transcript) {
    turns.push_back({{"speaker", t.speaker}, {"text", t.text}, {"status", t.status}});
  }
  json context = {{"scenario_id", scenario.scenario_id},
                  {"difficulty", scenario.difficulty},
                  {"band", scenario.band},
                  {"persona", scenario.persona},
                  {"outcome", *scenario.outcome},
                  {"evaluation_criteria", scenario.evaluation_criteria},
                  {"rubric", rubric},
                  {"transcript", turns}};
  std::string instructions =
      "Score the dialogue above on every rubric criterion from 1 (worst) to 5 (best), quoting the transcript in "
      "your reasoning. Then record observations for the next test of this weakness: strengths, weaknesses, "
      "dialogue_examples (verbatim excerpts) and guidance. Reply {\"criterion_scores\": {name: {score, "
      "reasoning}}, \"observations\": {...}}.";
  if (const std::string failure = failure_status_line(scenario); !failure.empty()) {
    context["failure_status"] = failure;
    instructions = failure + "\n" + instructions;
  }

  std::vector<ChatMessage> messages = thread_context;
  messages.push_back({"system",
                      "You are now the judge of the test you designed. Be strict and evidence-based. " +
                          task_tag("judge")});
  messages.push_back({"user", with_context(instructions, context)});
  const json reply = model.complete_json(ModelRole::judge_deep, std::move(messages), judge_schema(rubric));

  JudgeResult result;
  for (const auto& c : rubric.criteria) {
    const json& entry = reply["criterion_scores"][c.name];
    result.criterion_scores[c.name] = {entry["score"].get<double>(), entry["reasoning"].get<std::string>()};
  }
  const json& o = reply["observations"];
  result.observations.strengths = o["strengths"].get<std::vector<std::string>>();
  result.observations.weaknesses = o["weaknesses"].get<std::vector<std::string>>();
  result.observations.dialogue_examples = o["dialogue_examples"].get<std::vector<std::string>>();
  result.observations.guidance = o["guidance"].get<std::string>();
  result.overall = aggregate(result.criterion_scores, rubric);
  return result;
}

}  // namespace ata
