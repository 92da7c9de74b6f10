// SPDX-License-Identifier: Apache-2.0
#include "ata/planner.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <future>
#include <map>
#include <queue>
#include <regex>
#include <sstream>

#include "ata/error.hpp"
#include "ata/state_store.hpp"

namespace ata {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return text;
}

std::string trim(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

const json& graph_schema() {
  static const json schema = json::parse(R"({
    "type": "object",
    "required": ["nodes", "edges", "entry_nodes"],
    "properties": {
      "nodes": {"type": "array", "items": {
        "type": "object", "required": ["id", "kind"],
        "properties": {
          "id": {"type": "string", "minLength": 1},
          "kind": {"enum": ["dialogue_state", "tool_call", "memory_access", "exception_handler"]},
          "line": {"type": "integer"}}}},
      "edges": {"type": "array", "items": {
        "type": "object", "required": ["from", "to"],
        "properties": {
          "from": {"type": "string", "minLength": 1},
          "to": {"type": "string", "minLength": 1},
          "condition": {"type": "string"}}}},
      "entry_nodes": {"type": "array", "items": {"type": "string"}}
    }})");
  return schema;
}

const json& findings_schema() {
  static const json schema = json::parse(R"({
    "type": "object", "required": ["findings"],
    "properties": {"findings": {"type": "string"}}})");
  return schema;
}

const json& question_schema() {
  static const json schema = json::parse(R"({
    "type": "object", "required": ["done"],
    "properties": {"done": {"type": "boolean"}, "question": {"type": "string"}}})");
  return schema;
}

const json& queries_schema() {
  static const json schema = json::parse(R"({
    "type": "object", "required": ["queries"],
    "properties": {"queries": {"type": "array", "minItems": 1,
                               "items": {"type": "string", "minLength": 1}}}})");
  return schema;
}

const json& summaries_schema() {
  static const json schema = json::parse(R"({
    "type": "object", "required": ["items"],
    "properties": {"items": {"type": "array", "items": {
      "type": "object", "required": ["title", "summary"],
      "properties": {"title": {"type": "string"}, "summary": {"type": "string"},
                     "source_kind": {"enum": ["paper", "dataset", "bug_report"]}}}}}})");
  return schema;
}

const json& weakness_item_schema() {
  static const json schema = json::parse(R"({
    "type": "object",
    "required": ["name", "trigger_conditions", "expected_failure", "manifestation", "example_tests"],
    "properties": {
      "name": {"type": "string", "minLength": 1},
      "trigger_conditions": {"type": "string", "minLength": 1},
      "expected_failure": {"type": "string", "minLength": 1},
      "manifestation": {"type": "string", "minLength": 1},
      "example_tests": {"type": "object", "required": ["easy", "medium", "hard"],
        "properties": {"easy": {"type": "string", "minLength": 1},
                       "medium": {"type": "string", "minLength": 1},
                       "hard": {"type": "string", "minLength": 1}}},
      "provenance": {"type": "array", "items": {"type": "string"}}}})");
  return schema;
}

const json& weaknesses_schema() {
  static const json schema = [] {
    json s = {{"type", "object"},
              {"required", {"weaknesses"}},
              {"properties",
               {{"reasoning", {{"type", "string"}}},
                {"weaknesses", {{"type", "array"}, {"minItems", 1}, {"items", weakness_item_schema()}}}}}};
    return s;
  }();
  return schema;
}

const json& rubric_schema() {
  static const json schema = json::parse(R"({
    "type": "object", "required": ["criteria"],
    "properties": {
      "rubric_id": {"type": "string"},
      "overall_scale": {"type": "string"},
      "criteria": {"type": "array", "minItems": 1, "items": {
        "type": "object", "required": ["name", "levels"],
        "properties": {
          "name": {"type": "string", "minLength": 1},
          "description": {"type": "string"},
          "levels": {"type": "array", "minItems": 2, "items": {
            "type": "object", "required": ["label", "score"],
            "properties": {"label": {"type": "string"}, "score": {"type": "number", "minimum": 1, "maximum": 5},
                           "descriptor": {"type": "string"}}}}}}}}})");
  return schema;
}

bool is_source_file(const fs::path& path) {
  static const std::set<std::string> kExtensions = {
      ".py", ".js", ".ts", ".tsx", ".jsx", ".cpp", ".cc", ".cxx", ".c", ".h", ".hpp",
      ".java", ".go", ".rs", ".rb", ".kt", ".swift", ".cs", ".php", ".scala", ".yaml", ".yml", ".json", ".toml"};
  return kExtensions.contains(lower(path.extension().string()));
}

std::vector<std::string> chunk_lines(const std::string& content, std::size_t max_chars) {
  std::vector<std::string> chunks;
  std::string current;
  std::istringstream lines(content);
  std::string line;
  while (std::getline(lines, line)) {
    if (!current.empty() && current.size() + line.size() + 1 > max_chars) {
      chunks.push_back(std::move(current));
      current.clear();
    }
    current += line;
    current += '\n';
  }
  if (!current.empty() || chunks.empty()) chunks.push_back(std::move(current));
  return chunks;
}

std::string namespaced(const std::string& file, const std::string& symbol) {
  return symbol.find("::") == std::string::npos ? file + "::" + symbol : symbol;
}

struct FileGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  std::vector<std::string> entries;
};

FileGraph extract_file(const std::string& relative, const std::string& content, const ModelClient& model,
                       std::size_t max_chunk_chars) {
  FileGraph out;
  std::size_t line_offset = 0;
  for (const auto& chunk : chunk_lines(content, max_chunk_chars)) {
    const json context = {{"file", relative}, {"first_line", line_offset + 1}, {"content", chunk}};
    const json reply = model.complete_json(
        ModelRole::analysis_light,
        {{"system",
          "You are a static analyst reverse-engineering a conversational agent. " + task_tag("extract_graph") +
              "\nIdentify dialogue states, tool calls, memory accesses and exception handlers, and the "
              "transitions between them (label each edge with its condition)."},
         {"user", with_context("Extract the control-flow graph of this source file as JSON with fields "
                               "nodes[{id, kind, line}], edges[{from, to, condition}], entry_nodes[]. "
                               "Use bare symbol names for ids in this file; use file::symbol for "
                               "references into other files.",
                               context)}},
        graph_schema());
    for (const auto& n : reply["nodes"]) {
      GraphNode node;
      node.id = namespaced(relative, n["id"].get<std::string>());
      node.kind = node_kind_from_string(n["kind"].get<std::string>());
      node.location = relative + (n.contains("line") ? ":" + std::to_string(n["line"].get<long>()) : "");
      out.nodes.push_back(std::move(node));
    }
    for (const auto& e : reply["edges"]) {
      out.edges.push_back({namespaced(relative, e["from"].get<std::string>()),
                           namespaced(relative, e["to"].get<std::string>()),
                           e.value("condition", std::string{})});
    }
    for (const auto& id : reply["entry_nodes"]) out.entries.push_back(namespaced(relative, id.get<std::string>()));
    line_offset += static_cast<std::size_t>(std::count(chunk.begin(), chunk.end(), '\n'));
  }
  return out;
}

}  // namespace

// --- graph analysis ----------------------------------------------------------

std::set<std::string> unreachable_nodes(const AgentGraph& graph) {
  std::map<std::string, std::vector<std::string>> adjacency;
  for (const auto& e : graph.edges) adjacency[e.from].push_back(e.to);
  std::set<std::string> seen;
  std::queue<std::string> frontier;
  for (const auto& entry : graph.entry_nodes) {
    if (graph.has_node(entry) && seen.insert(entry).second) frontier.push(entry);
  }
  while (!frontier.empty()) {
    const std::string current = frontier.front();
    frontier.pop();
    if (auto it = adjacency.find(current); it != adjacency.end()) {
      for (const auto& next : it->second) {
        if (seen.insert(next).second) frontier.push(next);
      }
    }
  }
  std::set<std::string> unreachable;
  for (const auto& node : graph.nodes) {
    if (!seen.contains(node.id)) unreachable.insert(node.id);
  }
  return unreachable;
}

std::vector<std::string> missing_fallbacks(const AgentGraph& graph) {
  static const std::regex error_words(R"(error|fail|exception|timeout|fallback|retry|except|catch)",
                                      std::regex::icase);
  std::vector<std::string> out;
  for (const auto& node : graph.nodes) {
    if (node.kind != NodeKind::tool_call) continue;
    bool handled = false;
    for (const auto& e : graph.edges) {
      if (e.from != node.id) continue;
      const GraphNode* target = graph.find(e.to);
      if ((target && target->kind == NodeKind::exception_handler) ||
          std::regex_search(e.condition, error_words)) {
        handled = true;
        break;
      }
    }
    if (!handled) out.push_back(node.id);
  }
  return out;
}

std::vector<std::string> structural_findings(const AgentGraph& graph) {
  std::vector<std::string> out;
  for (const auto& id : unreachable_nodes(graph)) {
    out.push_back("unreachable node: " + id + " has no path from any entry node");
  }
  for (const auto& id : missing_fallbacks(graph)) {
    out.push_back("missing fallback: tool call " + id + " has no error or exception branch");
  }
  return out;
}

CodeAnalysis analyze_codebase(const std::optional<fs::path>& root, const ModelClient& model,
                              const CodeAnalysisOptions& options) {
  CodeAnalysis analysis;
  std::vector<fs::path> files;
  std::error_code ec;
  if (!root) {
    analysis.warnings.push_back("empty-codebase: no codebase registered for this agent; continuing without a graph");
  } else if (!fs::is_directory(*root, ec)) {
    analysis.warnings.push_back("empty-codebase: " + root->string() + " is not a readable directory");
  } else {
    for (auto it = fs::recursive_directory_iterator(*root, fs::directory_options::skip_permission_denied, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (ec) break;
      const auto name = it->path().filename().string();
      if (it->is_directory() && (name.starts_with(".") || name == "node_modules" || name == "__pycache__")) {
        it.disable_recursion_pending();
        continue;
      }
      if (it->is_regular_file() && is_source_file(it->path()) && it->file_size() <= options.max_file_bytes) {
        files.push_back(it->path());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      analysis.warnings.push_back("empty-codebase: no source files under " + root->string());
    }
  }

  std::vector<std::future<FileGraph>> pending;
  for (const auto& file : files) {
    const std::string relative = fs::relative(file, *root).generic_string();
    const std::string content = read_file(file);
    pending.push_back(std::async(std::launch::async, [&model, relative, content, &options] {
      return extract_file(relative, content, model, options.max_chunk_chars);
    }));
  }
  AgentGraph& graph = analysis.graph;
  for (auto& f : pending) {
    FileGraph part = f.get();
    graph.nodes.insert(graph.nodes.end(), part.nodes.begin(), part.nodes.end());
    graph.edges.insert(graph.edges.end(), part.edges.begin(), part.edges.end());
    graph.entry_nodes.insert(graph.entry_nodes.end(), part.entries.begin(), part.entries.end());
  }
  graph.normalize();

  auto dangling = std::remove_if(graph.edges.begin(), graph.edges.end(), [&](const GraphEdge& e) {
    return !graph.has_node(e.from) || !graph.has_node(e.to);
  });
  if (dangling != graph.edges.end()) {
    analysis.warnings.push_back("dropped " + std::to_string(std::distance(dangling, graph.edges.end())) +
                                " edge(s) referencing unknown nodes");
    graph.edges.erase(dangling, graph.edges.end());
  }
  std::erase_if(graph.entry_nodes, [&](const std::string& id) { return !graph.has_node(id); });
  if (graph.entry_nodes.empty() && !graph.nodes.empty()) {
    std::set<std::string> targets;
    for (const auto& e : graph.edges) targets.insert(e.to);
    for (const auto& n : graph.nodes) {
      if (!targets.contains(n.id)) {
        graph.entry_nodes.push_back(n.id);
        break;
      }
    }
    if (graph.entry_nodes.empty()) graph.entry_nodes.push_back(graph.nodes.front().id);
    analysis.warnings.push_back("no entry node declared; assuming " + graph.entry_nodes.front());
  }

  analysis.structural_findings = structural_findings(graph);
  if (graph.nodes.empty()) {
    analysis.findings = "No agent graph could be extracted.";
    return analysis;
  }
  const json reply = model.complete_json(
      ModelRole::analysis_light,
      {{"system", "You review agent architectures for design gaps. " + task_tag("describe_graph")},
       {"user", with_context("Describe design gaps and error-prone branches of this agent graph: unreachable "
                             "nodes, incorrect retry logic, missing fallbacks for edge cases. Reply as "
                             "{\"findings\": \"...\"}.",
                             {{"graph", graph}, {"structural_findings", analysis.structural_findings}})}},
      findings_schema());
  std::string text;
  for (const auto& line : analysis.structural_findings) text += "- " + line + "\n";
  if (!text.empty()) text += "\n";
  text += reply["findings"].get<std::string>();
  analysis.findings = std::move(text);
  return analysis;
}

// --- interview ---------------------------------------------------------------

std::vector<QaPair> interview(const InterviewContext& context, const ModelClient& model,
                              const QuestionSink& ask, AnswerSource& answers,
                              const InterviewOptions& options,
                              const std::function<void(const QaPair&)>& on_answer) {
  std::vector<QaPair> pairs;
  int disengaged = 0;
  while (static_cast<int>(pairs.size()) < options.question_cap) {
    const json reply = model.complete_json(
        ModelRole::planner_deep,
        {{"system",
          "You are preparing an adversarial test campaign against a conversational agent. " +
              task_tag("interview_question") +
              "\nAsk the agent's designer one question at a time, choosing the question whose answer "
              "would most change your test plan. Stop when you have what you need."},
         {"user", with_context("Reply {\"done\": true} if no further question is needed, otherwise "
                               "{\"done\": false, \"question\": \"...\"}.",
                               {{"aut", context.aut_description},
                                {"testing_focus", context.testing_focus},
                                {"answers", pairs},
                                {"questions_remaining", options.question_cap - static_cast<int>(pairs.size())}})}},
        question_schema());
    const std::string question = trim(reply.value("question", std::string{}));
    if (reply["done"].get<bool>() || question.empty()) break;
    if (ask) ask(question);
    auto answer = answers.answer(question);
    if (!answer) throw Error(ErrorCode::channel_closed, "answer channel closed during interview");
    QaPair pair{question, trim(*answer)};
    const std::string normalized = lower(pair.answer);
    pairs.push_back(pair);
    if (on_answer) on_answer(pair);
    disengaged = (normalized.empty() || normalized == "skip") ? disengaged + 1 : 0;
    if (disengaged >= options.disengage_after) break;
  }
  return pairs;
}

// --- evidence search ---------------------------------------------------------

CorpusSearch CorpusSearch::from_file(const fs::path& path) {
  json document = json::parse(read_file(path));
  const json& list = document.is_object() ? document.at("documents") : document;
  std::vector<SearchHit> corpus;
  for (const auto& d : list) {
    SearchHit hit;
    hit.title = d.value("title", std::string{});
    hit.snippet = d.value("snippet", std::string{});
    hit.url = d.value("url", std::string{});
    hit.kind = source_kind_from_string(d.value("kind", std::string("paper")));
    corpus.push_back(std::move(hit));
  }
  return CorpusSearch(std::move(corpus));
}

std::vector<SearchHit> CorpusSearch::search(const std::string& query, int limit) {
  std::set<std::string> terms;
  static const std::regex word(R"([a-z0-9]{3,})");
  const std::string q = lower(query);
  for (auto it = std::sregex_iterator(q.begin(), q.end(), word); it != std::sregex_iterator(); ++it) {
    terms.insert(it->str());
  }
  std::vector<std::pair<int, std::size_t>> scored;
  for (std::size_t i = 0; i < corpus_.size(); ++i) {
    const std::string text = lower(corpus_[i].title + " " + corpus_[i].snippet);
    int score = 0;
    for (const auto& t : terms) score += text.find(t) != std::string::npos ? 1 : 0;
    if (score > 0) scored.emplace_back(-score, i);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<SearchHit> out;
  for (const auto& [_, idx] : scored) {
    if (static_cast<int>(out.size()) >= limit) break;
    out.push_back(corpus_[idx]);
  }
  return out;
}

SearchOutcome search_loop(int iterations, int results_per_iteration, SearchBackend* backend,
                          const SearchContext& context, const ModelClient& model) {
  if (iterations < 1 || results_per_iteration < 1) {
    throw Error(ErrorCode::domain_error, "search_loop needs n >= 1 and m >= 1");
  }
  SearchOutcome outcome;
  if (backend == nullptr) {
    outcome.warnings.push_back("search-backend-unavailable: no search backend configured");
    return outcome;
  }
  std::set<std::string> seen_titles;
  std::vector<std::string> previous_summaries;
  for (int iteration = 1; iteration <= iterations; ++iteration) {
    const json q = model.complete_json(
        ModelRole::analysis_light,
        {{"system", "You plan literature and bug-report searches about failure modes of conversational agents. " +
                        task_tag("search_queries")},
         {"user", with_context("Propose search queries for academic papers, public datasets or bug reports "
                               "relevant to this agent. Reformulate using the lessons already gathered. "
                               "Reply {\"queries\": [...]}.",
                               {{"iteration", iteration},
                                {"aut", context.aut_description},
                                {"testing_focus", context.testing_focus},
                                {"answers", context.answers},
                                {"code_findings", context.code_findings},
                                {"previous_queries", outcome.queries},
                                {"previous_summaries", previous_summaries},
                                {"max_queries", results_per_iteration}})}},
        queries_schema());
    std::vector<std::string> queries;
    for (const auto& item : q["queries"]) {
      if (static_cast<int>(queries.size()) >= results_per_iteration) break;
      queries.push_back(item.get<std::string>());
    }
    outcome.queries.push_back(queries);

    std::vector<std::pair<std::string, SearchHit>> hits;  // (query, hit)
    try {
      for (const auto& query : queries) {
        for (auto& hit : backend->search(query, results_per_iteration)) {
          if (static_cast<int>(hits.size()) >= results_per_iteration) break;
          if (seen_titles.insert(hit.title).second) hits.emplace_back(query, std::move(hit));
        }
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::search_unavailable) throw;
      outcome.warnings.push_back(e.what());
      break;
    }
    if (hits.empty()) continue;

    json hit_context = json::array();
    for (const auto& [query, hit] : hits) {
      hit_context.push_back({{"title", hit.title}, {"snippet", hit.snippet}, {"kind", to_string(hit.kind)}});
    }
    const json s = model.complete_json(
        ModelRole::analysis_light,
        {{"system", "You extract lessons for agent testing from search results. " + task_tag("summarize_results")},
         {"user", with_context("Summarize each result as lessons for testing this agent (common failure modes, "
                               "evaluation styles). Reply {\"items\": [{\"title\", \"summary\", \"source_kind\"}]}.",
                               {{"aut", context.aut_description}, {"results", hit_context}})}},
        summaries_schema());
    std::map<std::string, std::string> summary_by_title;
    for (const auto& item : s["items"]) {
      summary_by_title[item["title"].get<std::string>()] = item["summary"].get<std::string>();
    }
    for (const auto& [query, hit] : hits) {
      EvidenceItem item;
      item.query = query;
      item.source_kind = hit.kind;
      item.title = hit.title;
      auto it = summary_by_title.find(hit.title);
      item.summary = it != summary_by_title.end() ? it->second : hit.snippet;
      item.iteration = iteration;
      previous_summaries.push_back(item.summary);
      outcome.items.push_back(std::move(item));
    }
  }
  return outcome;
}

// --- weaknesses --------------------------------------------------------------

bool provenance_resolves(const RunState& state, const std::string& ref) {
  const auto colon = ref.find(':');
  if (colon == std::string::npos) return false;
  const std::string kind = ref.substr(0, colon);
  const std::string index = ref.substr(colon + 1);
  if (kind == "code" && index == "graph") {
    return state.code_analysis.has_value() && !state.code_analysis->graph.nodes.empty();
  }
  if (index.empty() || !std::all_of(index.begin(), index.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return false;
  }
  const std::size_t i = std::stoul(index);
  if (kind == "answer") return i < state.user_answers.size();
  if (kind == "evidence") return i < state.search_findings.size();
  if (kind == "code") {
    return state.code_analysis.has_value() && i < state.code_analysis->structural_findings.size();
  }
  return false;
}

namespace {

Weakness weakness_from_json(const json& item) {
  Weakness w;
  w.name = item["name"].get<std::string>();
  w.trigger_conditions = item["trigger_conditions"].get<std::string>();
  w.expected_failure = item["expected_failure"].get<std::string>();
  w.manifestation = item["manifestation"].get<std::string>();
  for (const char* band : {"easy", "medium", "hard"}) {
    w.example_tests[band] = item["example_tests"][band].get<std::string>();
  }
  if (item.contains("provenance")) w.provenance = item["provenance"].get<std::vector<std::string>>();
  return w;
}

json indexed(const auto& list, const std::string& prefix) {
  json out = json::array();
  for (std::size_t i = 0; i < list.size(); ++i) {
    out.push_back({{"ref", prefix + ":" + std::to_string(i)}, {"item", list[i]}});
  }
  return out;
}

}  // namespace

std::vector<Weakness> generate_weaknesses(const RunState& state, const ModelClient& model, int max_weaknesses) {
  if (max_weaknesses < 1) throw Error(ErrorCode::domain_error, "max_weaknesses must be >= 1");
  json context = {{"aut", state.aut_ref},
                  {"testing_focus", state.testing_focus},
                  {"answers", indexed(state.user_answers, "answer")},
                  {"max_weaknesses", max_weaknesses}};
  if (state.code_analysis) {
    context["code_findings"] = indexed(state.code_analysis->structural_findings, "code");
    context["code_narrative"] = state.code_analysis->findings;
    if (!state.code_analysis->graph.nodes.empty()) context["graph_ref"] = "code:graph";
  }
  if (!state.search_findings.empty()) context["evidence"] = indexed(state.search_findings, "evidence");

  const json reply = model.complete_json(
      ModelRole::planner_deep,
      {{"system",
        "You hypothesize how a conversational agent is likely to fail. " + task_tag("generate_weaknesses") +
            "\nThink step by step over the code trace, the designer's answers and the retrieved evidence, "
            "then list distinct weaknesses."},
       {"user", with_context("Reply {\"reasoning\": \"...\", \"weaknesses\": [...]} with at most max_weaknesses "
                             "items. Each weakness needs name, trigger_conditions, expected_failure, "
                             "manifestation (how it shows in a dialogue), example_tests with an easy, medium "
                             "and hard persona sketch, and provenance: the refs of the context items that "
                             "motivated it.",
                             context)}},
      weaknesses_schema());

  std::vector<Weakness> out;
  for (const auto& item : reply["weaknesses"]) {
    if (static_cast<int>(out.size()) >= max_weaknesses) break;
    Weakness w = weakness_from_json(item);
    w.weakness_id = "W" + std::to_string(out.size() + 1);
    w.status = WeaknessStatus::proposed;
    std::erase_if(w.provenance, [&](const std::string& ref) { return !provenance_resolves(state, ref); });
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Weakness> approval_loop(const std::vector<Weakness>& proposed, ApprovalChannel& channel,
                                    const ModelClient& model) {
  if (proposed.empty()) throw Error(ErrorCode::precondition, "no weaknesses to approve");
  std::vector<Weakness> kept;
  for (const auto& weakness : proposed) {
    const Decision decision = channel.decide(weakness);
    switch (decision.kind) {
      case Decision::Kind::approve: {
        Weakness w = weakness;
        w.status = WeaknessStatus::approved;
        kept.push_back(std::move(w));
        break;
      }
      case Decision::Kind::revise: {
        const json reply = model.complete_json(
            ModelRole::planner_deep,
            {{"system", "You refine hypothesized agent weaknesses with the designer's corrections. " +
                            task_tag("revise_weakness")},
             {"user", with_context("Rewrite the weakness so it reflects the designer's edit. Keep every field. "
                                   "Reply with the full weakness object.",
                                   {{"weakness", weakness}, {"edit", decision.edit}})}},
            weakness_item_schema());
        Weakness w = weakness_from_json(reply);
        w.weakness_id = weakness.weakness_id;
        w.provenance = weakness.provenance;
        w.status = WeaknessStatus::revised;
        kept.push_back(std::move(w));
        break;
      }
      case Decision::Kind::reject:
        break;
    }
  }
  if (kept.empty()) throw Error(ErrorCode::all_rejected, "every proposed weakness was rejected");
  return kept;
}

// --- rubric ------------------------------------------------------------------

void validate_rubric(const Rubric& rubric) {
  if (rubric.criteria.empty()) throw Error(ErrorCode::invalid_rubric, "rubric has no criteria");
  std::set<std::string> names;
  for (const auto& c : rubric.criteria) {
    if (c.name.empty()) throw Error(ErrorCode::invalid_rubric, "criterion without a name");
    if (!names.insert(c.name).second) throw Error(ErrorCode::invalid_rubric, "duplicate criterion " + c.name);
    if (!(c.weight > 0)) throw Error(ErrorCode::invalid_rubric, c.name + ": weight must be positive");
    if (!(c.score_min < c.score_max)) throw Error(ErrorCode::invalid_rubric, c.name + ": empty score range");
    if (c.levels.empty()) throw Error(ErrorCode::invalid_rubric, c.name + ": no levels");
    for (std::size_t i = 0; i < c.levels.size(); ++i) {
      const auto& level = c.levels[i];
      if (level.judge_score < 1 || level.judge_score > 5) {
        throw Error(ErrorCode::invalid_rubric, c.name + "/" + level.label + ": judge score outside [1, 5]");
      }
      if (i > 0 && (!(level.score > c.levels[i - 1].score) || !(level.judge_score > c.levels[i - 1].judge_score))) {
        throw Error(ErrorCode::invalid_rubric, c.name + ": levels are not strictly increasing");
      }
    }
  }
}

Rubric load_rubric(const fs::path& path) {
  json document = json::parse(read_file(path), nullptr, false);
  if (document.is_discarded()) throw Error(ErrorCode::invalid_rubric, path.string() + " is not valid JSON");
  Rubric rubric = document.get<Rubric>();
  validate_rubric(rubric);
  return rubric;
}

Rubric make_rubric(const RunState& state, const std::optional<Rubric>& provided,
                   const std::string& aut_description, const ModelClient& model) {
  if (provided) {
    validate_rubric(*provided);
    return *provided;
  }
  const json reply = model.complete_json(
      ModelRole::analysis_light,
      {{"system", "You design evaluation rubrics for conversational agents. " + task_tag("make_rubric")},
       {"user", with_context("Create a general rubric for judging dialogues with this agent, based on its "
                             "purpose. Each criterion has ordered levels scored 1 (worst) to 5 (best). Reply "
                             "{\"rubric_id\", \"overall_scale\", \"criteria\": [{name, description, levels: "
                             "[{label, score, descriptor}]}]}.",
                             {{"aut", aut_description}, {"testing_focus", state.testing_focus}})}},
      rubric_schema());
  Rubric rubric = reply.get<Rubric>();
  if (rubric.rubric_id.empty()) rubric.rubric_id = "generated";
  for (auto& c : rubric.criteria) {
    std::sort(c.levels.begin(), c.levels.end(),
              [](const RubricLevel& a, const RubricLevel& b) { return a.score < b.score; });
    for (auto& level : c.levels) level.judge_score = level.score;
  }
  validate_rubric(rubric);
  return rubric;
}

}  // namespace ata
