// SPDX-License-Identifier: Apache-2.0
//
// Weakness planning: static code analysis into an AgentGraph, a
// one-question-at-a-time designer interview, an iterative evidence search,
// chain-of-thought weakness generation and the approval loop, plus rubric
// selection.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ata/llm_gateway.hpp"
#include "ata/types.hpp"

namespace ata {

// --- graph analysis ----------------------------------------------------------

/// Nodes with no path from any entry node. Pure graph search.
std::set<std::string> unreachable_nodes(const AgentGraph& graph);

/// Tool-call nodes with no outgoing edge to an exception handler and no edge
/// whose condition names an error path.
std::vector<std::string> missing_fallbacks(const AgentGraph& graph);

/// Human-readable defect lines derived from the graph alone.
std::vector<std::string> structural_findings(const AgentGraph& graph);

struct CodeAnalysisOptions {
  std::size_t max_chunk_chars = 12000;
  std::size_t max_file_bytes = 512 * 1024;
};

/// Recursively extracts a graph from every source file under `root`, one
/// analysis_light call per file chunk, merged under `file::symbol` ids.
/// A missing or empty codebase yields an empty graph and a warning.
CodeAnalysis analyze_codebase(const std::optional<std::filesystem::path>& root,
                              const ModelClient& model, const CodeAnalysisOptions& options = {});

// --- interview ---------------------------------------------------------------

class AnswerSource {
 public:
  virtual ~AnswerSource() = default;
  /// nullopt means the channel is closed.
  virtual std::optional<std::string> answer(const std::string& question) = 0;
};

using QuestionSink = std::function<void(const std::string& question)>;

struct InterviewOptions {
  int question_cap = 8;
  int disengage_after = 2;  // consecutive empty or "skip" answers
};

struct InterviewContext {
  std::string aut_description;
  std::string testing_focus;
};

std::vector<QaPair> interview(const InterviewContext& context, const ModelClient& model,
                              const QuestionSink& ask, AnswerSource& answers,
                              const InterviewOptions& options = {},
                              const std::function<void(const QaPair&)>& on_answer = {});

// --- evidence search ---------------------------------------------------------

struct SearchHit {
  std::string title;
  std::string snippet;
  std::string url;
  SourceKind kind = SourceKind::paper;
};

class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  /// Throws Error{search_unavailable} when the backend cannot be reached.
  virtual std::vector<SearchHit> search(const std::string& query, int limit) = 0;
};

/// Keyword search over a fixed JSON corpus: [{title, snippet, url, kind}].
class CorpusSearch : public SearchBackend {
 public:
  explicit CorpusSearch(std::vector<SearchHit> corpus) : corpus_(std::move(corpus)) {}
  static CorpusSearch from_file(const std::filesystem::path& path);
  std::vector<SearchHit> search(const std::string& query, int limit) override;

 private:
  std::vector<SearchHit> corpus_;
};

/// Generic web-search API: GET <endpoint>?q=<query>&n=<limit> ->
/// {"results": [{title, snippet, url, kind}]}.
class HttpSearch : public SearchBackend {
 public:
  HttpSearch(std::string endpoint, std::string api_key_env = {});
  std::vector<SearchHit> search(const std::string& query, int limit) override;

 private:
  std::string endpoint_;
  std::string api_key_env_;
};

struct SearchOutcome {
  std::vector<EvidenceItem> items;
  std::vector<std::vector<std::string>> queries;  // per iteration
  std::vector<std::string> warnings;
};

struct SearchContext {
  std::string aut_description;
  std::string testing_focus;
  std::vector<QaPair> answers;
  std::string code_findings;
};

/// n iterations of: formulate queries (from the previous iteration's
/// summaries), retrieve up to m results, summarize them into lessons.
SearchOutcome search_loop(int iterations, int results_per_iteration, SearchBackend* backend,
                          const SearchContext& context, const ModelClient& model);

// --- weaknesses --------------------------------------------------------------

/// True when a provenance reference ("answer:N", "code:N", "code:graph",
/// "evidence:N") points at something present in the state.
bool provenance_resolves(const RunState& state, const std::string& ref);

std::vector<Weakness> generate_weaknesses(const RunState& state, const ModelClient& model,
                                          int max_weaknesses);

struct Decision {
  enum class Kind { approve, revise, reject };
  Kind kind = Kind::approve;
  std::string edit;
};

class ApprovalChannel {
 public:
  virtual ~ApprovalChannel() = default;
  virtual Decision decide(const Weakness& weakness) = 0;
};

/// Asks for a decision on each weakness; revisions are merged by the planner
/// model. Rejected weaknesses are dropped. Throws all_rejected if nothing
/// survives.
std::vector<Weakness> approval_loop(const std::vector<Weakness>& proposed, ApprovalChannel& channel,
                                    const ModelClient& model);

// --- rubric ------------------------------------------------------------------

/// Throws invalid_rubric unless the rubric has at least one criterion, unique
/// names, and strictly increasing level scores mapped into [1, 5].
void validate_rubric(const Rubric& rubric);
Rubric load_rubric(const std::filesystem::path& path);

/// Provided rubrics pass through unchanged; otherwise one is generated from
/// the agent's purpose.
Rubric make_rubric(const RunState& state, const std::optional<Rubric>& provided,
                   const std::string& aut_description, const ModelClient& model);

}  // namespace ata
