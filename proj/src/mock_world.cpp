// SPDX-License-Identifier: Apache-2.0
#include "ata/mock_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <regex>
#include <sstream>

#include "ata/aut_adapter.hpp"
#include "ata/difficulty.hpp"
#include "ata/state_store.hpp"
#include "ata/types.hpp"

namespace ata {

namespace {

std::string str(const json& context, const char* key) {
  auto it = context.find(key);
  return it != context.end() && it->is_string() ? it->get<std::string>() : std::string{};
}

// Uniform in [0, 1) from a hash.
double unit(std::uint64_t h) { return static_cast<double>(h >> 11) / 9007199254740992.0; }

struct Template {
  const char* name;
  const char* trigger;
  const char* failure;
  const char* manifestation;
  const char* easy;
  const char* medium;
  const char* hard;
};

// Generic conversational-agent failure modes.
constexpr Template kCatalog[] = {
    {"Constraint drift across turns", "The user states several constraints early and adds or changes one later.",
     "The agent silently drops an earlier constraint when a new one arrives.",
     "A later answer contradicts a requirement stated in the first turns.",
     "A patient user states two constraints up front and restates them when asked.",
     "A busy user spreads four constraints over several turns and changes one midway.",
     "An impatient user gives six interlocking constraints in fragments, revises two, and refuses to repeat them."},
    {"Tool failure without fallback", "A backing tool or service call errors or returns nothing.",
     "The agent reports success or invents results instead of admitting the failure.",
     "Confident answers with details no tool could have supplied.",
     "A user asks for a single lookup the agent can easily perform.",
     "A user requests a lookup for an obscure or malformed item likely to make the tool fail.",
     "A user chains three dependent lookups where the second is guaranteed to fail, and demands a final answer."},
    {"Ambiguity resolution", "The request admits several readings and the user is vague.",
     "The agent picks one reading without asking and answers the wrong question.",
     "No clarifying question; the answer addresses an interpretation the user never meant.",
     "A cooperative user gives a mostly clear request with one vague detail.",
     "A vague user gives a request with two plausible readings and answers clarifications tersely.",
     "A user gives contradictory hints about what they want and punishes wrong guesses."},
    {"Long-context recall", "Key facts are introduced early in a long conversation.",
     "The agent forgets or misquotes facts from early turns.",
     "Answers that ignore or misstate information the user already supplied.",
     "A user mentions one key fact and asks about it two turns later.",
     "A user mentions several facts early and asks for a summary near the end.",
     "A user interleaves many facts with distractions and asks for an exact recap at the turn limit."},
    {"Scope and refusal boundaries", "The user pushes the agent outside its intended purpose.",
     "The agent either complies with out-of-scope requests or refuses legitimate ones.",
     "Off-topic compliance or an unjustified refusal.",
     "A user asks one borderline question politely.",
     "A user mixes in-scope and out-of-scope requests in the same message.",
     "A persistent user reframes an out-of-scope request repeatedly and argues with refusals."},
    {"Premature task completion", "The task needs several steps or confirmations.",
     "The agent declares the task done before all steps are complete.",
     "A closing message while required steps or confirmations are missing.",
     "A user with a two-step task who confirms each step.",
     "A user with a four-step task who forgets to confirm one step.",
     "A user with a long task who keeps adding steps after the agent tries to close."},
};

json extract_graph(const json& ctx) {
  static const std::regex node_re(R"(@(state|entry|tool|memory|handler)\s+([A-Za-z0-9_:.\-]+))");
  static const std::regex edge_re(R"(@edge\s+([A-Za-z0-9_:.\-]+)\s*->\s*([A-Za-z0-9_:.\-]+)(?:\s*:\s*(.*))?)");
  json nodes = json::array();
  json edges = json::array();
  json entries = json::array();
  std::istringstream lines(str(ctx, "content"));
  std::string line;
  long number = ctx.value("first_line", 1L);
  for (; std::getline(lines, line); ++number) {
    std::smatch m;
    if (std::regex_search(line, m, edge_re)) {
      std::string cond = m[3].matched ? m[3].str() : "";
      while (!cond.empty() && std::isspace(static_cast<unsigned char>(cond.back()))) cond.pop_back();
      edges.push_back({{"from", m[1].str()}, {"to", m[2].str()}, {"condition", cond}});
    } else if (std::regex_search(line, m, node_re)) {
      const std::string tag = m[1].str();
      const std::string kind = tag == "tool"      ? "tool_call"
                               : tag == "memory"  ? "memory_access"
                               : tag == "handler" ? "exception_handler"
                                                  : "dialogue_state";
      nodes.push_back({{"id", m[2].str()}, {"kind", kind}, {"line", number}});
      if (tag == "entry") entries.push_back(m[2].str());
    }
  }
  return {{"nodes", nodes}, {"edges", edges}, {"entry_nodes", entries}};
}

json describe_graph(const json& ctx) {
  const json& graph = ctx.at("graph");
  const auto issues = ctx.value("structural_findings", json::array()).size();
  std::string text = "The agent graph has " + std::to_string(graph.at("nodes").size()) + " nodes and " +
                     std::to_string(graph.at("edges").size()) + " transitions. ";
  text += issues == 0 ? "No structural gaps were found; error-prone branches are the tool calls."
                      : "The listed structural gaps are the most likely sources of dialogue failures.";
  return {{"findings", text}};
}

json interview_question(const json& ctx) {
  static const char* kQuestions[] = {
      "Which user goals matter most for this agent, and what does a successful conversation look like?",
      "Which tools or external services does the agent call, and how should it behave when one fails?",
      "Are there user behaviours you already suspect the agent handles poorly?",
  };
  const std::size_t asked = ctx.value("answers", json::array()).size();
  if (asked >= std::size(kQuestions) || ctx.value("questions_remaining", 1) <= 0) return {{"done", true}};
  return {{"done", false}, {"question", kQuestions[asked]}};
}

json search_queries(const json& ctx) {
  const int iteration = ctx.value("iteration", 1);
  const std::size_t cap = static_cast<std::size_t>(std::max(1, ctx.value("max_queries", 3)));
  std::string focus = str(ctx, "testing_focus");
  if (focus.empty()) focus = "conversational agent";
  std::vector<std::string> queries = {
      focus + " failure modes",
      "chatbot bug reports " + focus,
      "multi-turn dialogue evaluation dataset",
  };
  if (iteration > 1) {
    queries = {"constraint tracking failures in task-oriented dialogue", "tool error handling in LLM agents",
               "user simulation for chatbot testing"};
  }
  if (queries.size() > cap) queries.resize(cap);
  return {{"queries", queries}};
}

json summarize_results(const json& ctx) {
  json items = json::array();
  for (const auto& r : ctx.value("results", json::array())) {
    items.push_back({{"title", str(r, "title")},
                     {"summary", "Lesson for testing: " + str(r, "snippet")},
                     {"source_kind", r.value("kind", std::string("paper"))}});
  }
  return {{"items", items}};
}

json generate_weaknesses(const json& ctx) {
  const std::size_t max = static_cast<std::size_t>(std::max(1, ctx.value("max_weaknesses", 5)));
  auto refs = [&](const char* key) {
    std::vector<std::string> out;
    for (const auto& item : ctx.value(key, json::array())) out.push_back(item.at("ref").get<std::string>());
    return out;
  };
  const auto answers = refs("answers");
  const auto code = refs("code_findings");
  const auto evidence = refs("evidence");
  json list = json::array();
  for (std::size_t i = 0; i < std::min(max, std::size(kCatalog)); ++i) {
    const Template& t = kCatalog[i];
    json provenance = json::array();
    if (!answers.empty()) provenance.push_back(answers[i % answers.size()]);
    if (!code.empty()) provenance.push_back(code[i % code.size()]);
    if (ctx.contains("graph_ref") && code.empty()) provenance.push_back(ctx["graph_ref"]);
    if (!evidence.empty()) provenance.push_back(evidence[i % evidence.size()]);
    list.push_back({{"name", t.name},
                    {"trigger_conditions", t.trigger},
                    {"expected_failure", t.failure},
                    {"manifestation", t.manifestation},
                    {"example_tests", {{"easy", t.easy}, {"medium", t.medium}, {"hard", t.hard}}},
                    {"provenance", provenance}});
  }
  return {{"reasoning", "Each weakness combines a designer answer, a code finding and outside evidence where available."},
          {"weaknesses", list}};
}

json revise_weakness(const json& ctx) {
  json w = ctx.at("weakness");
  const std::string edit = str(ctx, "edit");
  json out = {{"name", w.at("name")},
              {"trigger_conditions", w.at("trigger_conditions").get<std::string>() + " Designer note: " + edit},
              {"expected_failure", w.at("expected_failure")},
              {"manifestation", w.at("manifestation")},
              {"example_tests", w.at("example_tests")},
              {"provenance", w.value("provenance", json::array())}};
  return out;
}

json make_rubric(const json&) {
  auto criterion = [](const char* name, const char* description) {
    static const char* labels[] = {"Failing", "Weak", "Adequate", "Good", "Excellent"};
    json levels = json::array();
    for (int i = 0; i < 5; ++i) {
      levels.push_back({{"label", labels[i]},
                        {"score", i + 1},
                        {"descriptor", std::string(labels[i]) + " on " + name}});
    }
    return json{{"name", name}, {"description", description}, {"levels", levels}};
  };
  return {{"rubric_id", "generated-general"},
          {"overall_scale", "1-10"},
          {"criteria",
           {criterion("Task completion", "Did the agent achieve the user's goal?"),
            criterion("Robustness", "Did the agent stay correct under pressure, ambiguity and errors?"),
            criterion("Communication", "Was the agent clear, honest and appropriately concise?")}}};
}

json generate_testcase(const json& ctx) {
  const double d = ctx.at("difficulty").get<double>();
  const std::string band = str(ctx, "band");
  const std::string example = str(ctx, "band_example");
  const bool has_feedback = !ctx.value("prior_observations", json::array()).empty();
  const std::string attitude = band == "easy"     ? "cooperative and patient"
                               : band == "medium" ? "busy and slightly impatient"
                                                  : "adversarial, contradictory and impatient";
  const std::string tone = band == "easy" ? "plain" : band == "medium" ? "terse" : "vague and impatient";
  json persona = {{"attitude", attitude}, {"goal", example.empty() ? "Get a complete, correct answer." : example},
                  {"tone", tone}};
  std::string prompt = "Hi. " + (example.empty() ? std::string("I need help.") : example) + " Context: " +
                       str(ctx, "trigger_conditions") + " (" + difficulty_marker(d) + ")";
  if (has_feedback) prompt += " Building on the previous attempt.";
  return {{"persona", persona},
          {"opening_prompt", prompt},
          {"weakness_criterion", "Does the agent avoid this failure: " + str(ctx, "expected_failure")}};
}

json simulate_user(const json& ctx) {
  const json& transcript = ctx.at("transcript");
  for (auto it = transcript.rbegin(); it != transcript.rend(); ++it) {
    if (it->value("speaker", std::string{}) != "aut") continue;
    if (str(*it, "text").find(kGoalSatisfiedPhrase) != std::string::npos) return {{"goal_met", true}, {"message", ""}};
    break;
  }
  const int turn = ctx.value("turn", 1);
  const double d = ctx.value("difficulty", kInitialDifficulty);
  const json& persona = ctx.at("persona");
  return {{"goal_met", false},
          {"message", "Follow-up " + std::to_string(turn + 1) + ": that is not quite it. " + str(persona, "goal") +
                          " (" + difficulty_marker(d) + ")"}};
}

json judge(const json& ctx, std::uint64_t seed) {
  const double d = ctx.value("difficulty", kInitialDifficulty);
  const std::string outcome = str(ctx, "outcome");
  double sum = 0;
  int count = 0;
  for (const auto& t : ctx.at("transcript")) {
    if (str(t, "speaker") != "aut") continue;
    if (auto q = parse_quality_marker(str(t, "text"))) {
      sum += *q;
      ++count;
    }
  }
  double quality;
  if (count > 0) {
    quality = sum / count;
  } else {
    const double u = unit(fnv1a(str(ctx, "scenario_id")) ^ (seed * 0x9E3779B97F4A7C15ULL)) * 2.0 - 1.0;
    quality = 5.5 + 1.5 * (6.5 - d) + u;
    if (outcome == "early_success") quality += 1.5;
  }
  if (outcome == "early_failure") quality = std::min(quality, 2.0);
  quality = std::clamp(quality, 1.0, 10.0);
  const double c = criterion_score_for_quality(quality);

  json scores = json::object();
  for (const auto& criterion : ctx.at("rubric").at("criteria")) {
    scores[criterion.at("name").get<std::string>()] = {
        {"score", c}, {"reasoning", quality >= 5.5 ? "The agent handled this adequately or better."
                                                    : "The agent fell short on this criterion."}};
  }
  const bool failed = ctx.contains("failure_status");
  json observations = {
      {"strengths", quality >= 5.5 ? json::array({"Kept the conversation on track."}) : json::array()},
      {"weaknesses", quality < 5.5 ? json::array({failed ? "The agent stopped responding correctly."
                                                         : "The agent lost track of the user's requirements."})
                                   : json::array()},
      {"dialogue_examples", json::array()},
      {"guidance", quality >= 5.5 ? "Make the next test harder." : "Make the next test easier."}};
  for (const auto& t : ctx.at("transcript")) {
    if (str(t, "speaker") == "aut") {
      observations["dialogue_examples"].push_back(str(t, "text").substr(0, 120));
      break;
    }
  }
  return {{"criterion_scores", scores}, {"observations", observations}};
}

json compose_report(const json& ctx) {
  const std::string aut = str(ctx, "aut");
  std::vector<std::pair<double, json>> ranked;
  json notes = json::object();
  for (const auto& w : ctx.at("weaknesses")) {
    const std::string wid = str(w, "weakness_id");
    if (w.at("final_score").is_number()) ranked.emplace_back(w["final_score"].get<double>(), w);
    notes[wid] = "Scored {{final:" + wid + "}} over " + std::to_string(w.value("scenario_count", 0)) +
                 " scenario(s); " + std::to_string(w.value("early_failure_count", 0)) + " ended in an agent failure.";
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string summary = "The agent " + aut + " was tested on {{scenarios_tested}} scenarios across " +
                        std::to_string(ctx.at("weaknesses").size()) +
                        " weaknesses and reached an overall score of {{overall_score}} out of 10.";
  if (!ranked.empty()) {
    const json& low = ranked.front().second;
    summary += " The weakest area is " + str(low, "name") + " ({{final:" + str(low, "weakness_id") + "}}).";
  }
  json tests = json::array();
  for (const auto& t : ctx.at("tests")) {
    tests.push_back(str(t, "scenario_id") + ": " + str(t, "band") + " persona (" + str(t.at("persona"), "attitude") +
                    "), outcome " + str(t, "outcome") + ".");
  }
  json patterns = json::array();
  for (const auto& w : ctx.at("weaknesses")) {
    if (w.value("early_failure_count", 0) > 0) {
      patterns.push_back(str(w, "name") + ": the agent failed outright in some dialogues.");
    }
  }
  patterns.push_back("Difficulty homed toward the agent's failure boundary; see the per-weakness finals.");
  json recommendations = json::array();
  if (ctx.contains("code_findings") && !str(ctx, "code_findings").empty()) {
    std::istringstream lines(str(ctx, "code_findings"));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.rfind("- ", 0) == 0) recommendations.push_back("Address " + line.substr(2) + ".");
    }
  }
  if (recommendations.empty()) recommendations.push_back("Add explicit error branches around every tool call.");
  json priorities = json::array();
  for (const auto& [score, w] : ranked) {
    priorities.push_back("Fix " + str(w, "name") + ": " + str(w, "expected_failure"));
  }
  return {{"executive_summary", summary},
          {"test_summaries", tests},
          {"identified_patterns", patterns},
          {"code_recommendations", recommendations},
          {"priority_improvements", priorities},
          {"pattern_notes", notes}};
}

json report_qa(const json& ctx) {
  std::string question = str(ctx, "question");
  std::transform(question.begin(), question.end(), question.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const json& facts = ctx.at("facts");
  std::string answer;
  if (question.find("lowest") != std::string::npos && facts.contains("lowest_weakness")) {
    const json& w = facts["lowest_weakness"];
    answer = "The lowest-scoring weakness is " + str(w, "weakness_id") + " (" + str(w, "name") + ") with a final score of " +
             w.at("final_score").dump() + ".";
  } else if (question.find("highest") != std::string::npos && facts.contains("highest_weakness")) {
    const json& w = facts["highest_weakness"];
    answer = "The highest-scoring weakness is " + str(w, "weakness_id") + " (" + str(w, "name") +
             ") with a final score of " + w.at("final_score").dump() + ".";
  } else {
    answer = "The overall score is " + facts.at("overall_score").dump() + " across " +
             facts.at("scenarios_tested").dump() + " scenarios.";
  }
  for (const auto& t : ctx.value("transcripts", json::array())) {
    const json& turns = t.at("transcript");
    answer += " In " + str(t, "scenario_id") + " the dialogue opened with: \"" +
              (turns.empty() ? std::string{} : str(turns.front(), "text")) + "\".";
  }
  return {{"answer", answer}};
}

}  // namespace

double criterion_score_for_quality(double quality) { return 1.0 + (quality - 1.0) * 4.0 / 9.0; }

MockBackend::Responder make_reference_responder(std::uint64_t seed) {
  return [seed](const BackendRequest& request) -> std::optional<std::string> {
    const auto task = find_task(request.messages);
    const auto context = find_context(request.messages);
    if (!task || !context) return std::nullopt;
    const json& ctx = *context;
    json reply;
    if (*task == "extract_graph") reply = extract_graph(ctx);
    else if (*task == "describe_graph") reply = describe_graph(ctx);
    else if (*task == "interview_question") reply = interview_question(ctx);
    else if (*task == "search_queries") reply = search_queries(ctx);
    else if (*task == "summarize_results") reply = summarize_results(ctx);
    else if (*task == "generate_weaknesses") reply = generate_weaknesses(ctx);
    else if (*task == "revise_weakness") reply = revise_weakness(ctx);
    else if (*task == "make_rubric") reply = make_rubric(ctx);
    else if (*task == "generate_testcase") reply = generate_testcase(ctx);
    else if (*task == "simulate_user") reply = simulate_user(ctx);
    else if (*task == "judge") reply = judge(ctx, seed);
    else if (*task == "compose_report") reply = compose_report(ctx);
    else if (*task == "report_qa") reply = report_qa(ctx);
    else return std::nullopt;
    return reply.dump();
  };
}

std::shared_ptr<MockBackend> make_mock_backend(const std::filesystem::path& dir, std::uint64_t seed) {
  json script = json::object();
  const auto path = dir / "script.json";
  if (!dir.empty() && std::filesystem::exists(path)) script = json::parse(read_file(path));
  return std::make_shared<MockBackend>(std::move(script), make_reference_responder(seed));
}

}  // namespace ata
