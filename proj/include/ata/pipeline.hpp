// SPDX-License-Identifier: Apache-2.0
//
// The run engine shared by the CLI and the HTTP service: phases in order,
// every result committed to the state store.
#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "ata/aut_adapter.hpp"
#include "ata/error.hpp"
#include "ata/llm_gateway.hpp"
#include "ata/planner.hpp"
#include "ata/reporter.hpp"
#include "ata/state_store.hpp"
#include "ata/test_thread.hpp"

namespace ata {

struct RunConfig {
  std::string aut_id;
  std::string rubric = "auto";  // "auto" or a rubric file path
  std::string testing_focus;
  int max_weaknesses = 5;
  int k_max = 3;
  double epsilon = kDefaultEpsilon;
  double eta = 3.0;
  bool ablate_evidence = false;
  std::uint64_t seed = 0;
  int search_iterations = 2;
  int search_results = 3;
  int question_cap = 8;
};

void to_json(json& j, const RunConfig& v);
void from_json(const json& j, RunConfig& v);

/// Throws invalid_config unless k_max >= 1, eta > 0, epsilon > 0,
/// max_weaknesses >= 1 and the search budget is positive.
void validate(const RunConfig& config);

/// Human-in-the-loop inputs. The CLI reads a terminal or an answers file,
/// the service blocks on phase-gated POSTs.
struct Interaction {
  AnswerSource* answers = nullptr;
  ApprovalChannel* approvals = nullptr;
};

struct EngineResources {
  StateStore* store = nullptr;
  const AutRegistry* auts = nullptr;
  LlmGateway* gateway = nullptr;
  SearchBackend* search = nullptr;  // nullptr: evidence search degrades to a warning
};

class Engine {
 public:
  explicit Engine(EngineResources resources);

  /// Validates the config and the agent id, then registers a run in phase
  /// `selecting`. Throws invalid_config or registration.
  std::string create(const RunConfig& config, const std::string& run_id = {});

  /// Drives a created run to `done`. On error the run moves to `failed`
  /// with the message recorded, and the error is rethrown.
  void execute(const std::string& run_id, const RunConfig& config, Interaction interaction);

  /// Model client whose calls are logged as model_call events of `run_id`.
  ModelClient client_for(const std::string& run_id, const std::string& actor) const;

 private:
  void analyze(const std::string& run_id, const AutRegistration& aut, const ModelClient& model);
  void interview_phase(const std::string& run_id, const RunConfig& config, const AutRegistration& aut,
                       const ModelClient& model, AnswerSource& answers);
  void search_phase(const std::string& run_id, const RunConfig& config, const AutRegistration& aut,
                    const ModelClient& model);
  void hypothesize(const std::string& run_id, const RunConfig& config, const AutRegistration& aut,
                   const ModelClient& model);
  void approve(const std::string& run_id, const ModelClient& model, ApprovalChannel& approvals);
  void test(const std::string& run_id, const RunConfig& config, const AutRegistration& aut);
  void report(const std::string& run_id);
  void set_phase(const std::string& run_id, Phase phase);

  EngineResources r_;
};

/// Answers from a list, then "closed". Used for --answers files and tests.
class ScriptedAnswers : public AnswerSource {
 public:
  explicit ScriptedAnswers(std::vector<std::string> answers) : answers_(std::move(answers)) {}
  std::optional<std::string> answer(const std::string& question) override;

 private:
  std::vector<std::string> answers_;
  std::size_t next_ = 0;
};

/// Approves everything, or applies a fixed {weakness_id: decision} map.
class ScriptedApprovals : public ApprovalChannel {
 public:
  explicit ScriptedApprovals(std::map<std::string, Decision> decisions = {}) : decisions_(std::move(decisions)) {}
  Decision decide(const Weakness& weakness) override;

 private:
  std::map<std::string, Decision> decisions_;
};

/// Thread-safe mailbox feeding a blocked engine from another thread.
class AnswerQueue : public AnswerSource {
 public:
  std::optional<std::string> answer(const std::string& question) override;
  void push(std::string answer);
  void close();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  bool closed_ = false;
};

class DecisionBoard : public ApprovalChannel {
 public:
  Decision decide(const Weakness& weakness) override;
  void post(const std::string& weakness_id, Decision decision);
  void close();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Decision> decisions_;
  bool closed_ = false;
};

Decision decision_from_json(const json& body);

/// Process exit code for an error raised while the run was in `phase`.
int exit_code_for(const std::optional<Phase>& phase, ErrorCode code);

}  // namespace ata
