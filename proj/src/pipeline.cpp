// SPDX-License-Identifier: Apache-2.0
#include "ata/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "ata/error.hpp"

namespace ata {

void to_json(json& j, const RunConfig& v) {
  j = {{"aut_id", v.aut_id},
       {"rubric", v.rubric},
       {"testing_focus", v.testing_focus},
       {"max_weaknesses", v.max_weaknesses},
       {"k_max", v.k_max},
       {"epsilon", v.epsilon},
       {"eta", v.eta},
       {"ablate_evidence", v.ablate_evidence},
       {"seed", v.seed},
       {"search_iterations", v.search_iterations},
       {"search_results", v.search_results},
       {"question_cap", v.question_cap}};
}

void from_json(const json& j, RunConfig& v) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_config, "run config must be an object");
  try {
    v.aut_id = j.at("aut_id").get<std::string>();
    v.rubric = j.value("rubric", v.rubric);
    v.testing_focus = j.value("testing_focus", v.testing_focus);
    v.max_weaknesses = j.value("max_weaknesses", v.max_weaknesses);
    v.k_max = j.value("k_max", v.k_max);
    v.epsilon = j.value("epsilon", v.epsilon);
    v.eta = j.value("eta", v.eta);
    v.ablate_evidence = j.value("ablate_evidence", v.ablate_evidence);
    v.seed = j.value("seed", v.seed);
    v.search_iterations = j.value("search_iterations", v.search_iterations);
    v.search_results = j.value("search_results", v.search_results);
    v.question_cap = j.value("question_cap", v.question_cap);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_config, std::string("run config: ") + e.what());
  }
}

void validate(const RunConfig& config) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::invalid_config, what);
  };
  require(!config.aut_id.empty(), "aut_id is required");
  require(config.k_max >= 1, "k_max must be >= 1");
  require(config.eta > 0 && std::isfinite(config.eta), "eta must be positive");
  require(config.epsilon > 0 && std::isfinite(config.epsilon), "epsilon must be positive");
  require(config.max_weaknesses >= 1, "max_weaknesses must be >= 1");
  require(config.search_iterations >= 1 && config.search_results >= 1, "search budget must be positive");
  require(config.question_cap >= 0, "question_cap must be >= 0");
  require(!config.rubric.empty(), "rubric must be 'auto' or a path");
}

// --- interaction channels ----------------------------------------------------

std::optional<std::string> ScriptedAnswers::answer(const std::string&) {
  if (next_ >= answers_.size()) return std::nullopt;
  return answers_[next_++];
}

Decision ScriptedApprovals::decide(const Weakness& weakness) {
  auto it = decisions_.find(weakness.weakness_id);
  return it == decisions_.end() ? Decision{} : it->second;
}

std::optional<std::string> AnswerQueue::answer(const std::string&) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
  if (queue_.empty()) return std::nullopt;
  std::string out = std::move(queue_.front());
  queue_.pop_front();
  return out;
}

void AnswerQueue::push(std::string answer) {
  {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(answer));
  }
  cv_.notify_all();
}

void AnswerQueue::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

Decision DecisionBoard::decide(const Weakness& weakness) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return closed_ || decisions_.contains(weakness.weakness_id); });
  auto it = decisions_.find(weakness.weakness_id);
  if (it == decisions_.end()) throw Error(ErrorCode::channel_closed, "approval channel closed");
  return it->second;
}

void DecisionBoard::post(const std::string& weakness_id, Decision decision) {
  {
    std::lock_guard lock(mu_);
    decisions_[weakness_id] = std::move(decision);
  }
  cv_.notify_all();
}

void DecisionBoard::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

Decision decision_from_json(const json& body) {
  const std::string kind = body.is_object() ? body.value("decision", std::string{}) : std::string{};
  Decision d;
  if (kind == "approve") {
    d.kind = Decision::Kind::approve;
  } else if (kind == "reject") {
    d.kind = Decision::Kind::reject;
  } else if (kind == "revise") {
    d.kind = Decision::Kind::revise;
    d.edit = body.value("edit", std::string{});
    if (d.edit.empty()) throw Error(ErrorCode::invalid_config, "revise needs a non-empty edit");
  } else {
    throw Error(ErrorCode::invalid_config, "decision must be approve, revise or reject");
  }
  return d;
}

int exit_code_for(const std::optional<Phase>& phase, ErrorCode code) {
  if (!phase || *phase == Phase::selecting) {
    switch (code) {
      case ErrorCode::invalid_config: return 2;
      case ErrorCode::registration: return 3;
      case ErrorCode::invalid_rubric: return 4;
      default: return 1;
    }
  }
  return 10 + static_cast<int>(*phase);
}

// --- engine ------------------------------------------------------------------

Engine::Engine(EngineResources resources) : r_(resources) {
  if (!r_.store || !r_.auts || !r_.gateway) throw Error(ErrorCode::invalid_config, "engine needs store, agents and gateway");
}

std::string Engine::create(const RunConfig& config, const std::string& run_id) {
  validate(config);
  if (!r_.auts->contains(config.aut_id)) {
    throw Error(ErrorCode::registration, "unknown agent '" + config.aut_id + "'");
  }
  if (config.rubric != "auto") load_rubric(config.rubric);
  r_.gateway->validate();
  RunState state;
  state.run_id = run_id;
  state.aut_ref = config.aut_id;
  state.testing_focus = config.testing_focus;
  state.settings.max_weaknesses = config.max_weaknesses;
  state.settings.k_max = config.k_max;
  state.settings.epsilon = config.epsilon;
  state.settings.eta = config.eta;
  state.settings.ablate_evidence = config.ablate_evidence;
  state.settings.seed = config.seed;
  state.phase = Phase::selecting;
  return r_.store->create_run(std::move(state));
}

ModelClient Engine::client_for(const std::string& run_id, const std::string& actor) const {
  StateStore* store = r_.store;
  return ModelClient(*r_.gateway, [store, run_id, actor](const json& record) {
    store->append_event(run_id, actor, EventKind::model_call, record);
  });
}

void Engine::set_phase(const std::string& run_id, Phase phase) {
  r_.store->update(run_id, [&](RunState& s) { s.phase = phase; }, "engine");
}

void Engine::execute(const std::string& run_id, const RunConfig& config, Interaction interaction) {
  const AutRegistration& aut = r_.auts->get(config.aut_id);
  const ModelClient model = client_for(run_id, "engine");
  try {
    if (!config.ablate_evidence) {
      set_phase(run_id, Phase::analyzing);
      analyze(run_id, aut, model);
    }
    set_phase(run_id, Phase::interviewing);
    ScriptedAnswers none({});
    interview_phase(run_id, config, aut, model, interaction.answers ? *interaction.answers : none);
    if (!config.ablate_evidence) {
      set_phase(run_id, Phase::searching);
      search_phase(run_id, config, aut, model);
    }
    set_phase(run_id, Phase::hypothesizing);
    hypothesize(run_id, config, aut, model);
    set_phase(run_id, Phase::awaiting_approval);
    ScriptedApprovals approve_all;
    approve(run_id, model, interaction.approvals ? *interaction.approvals : approve_all);
    set_phase(run_id, Phase::testing);
    test(run_id, config, aut);
    set_phase(run_id, Phase::reporting);
    report(run_id);
  } catch (const std::exception& e) {
    const Phase at = r_.store->snapshot(run_id).phase;
    json payload = {{"phase", at}, {"message", e.what()}};
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
      payload["code"] = to_string(err->code());
      if (!err->details().is_null()) payload["details"] = err->details();
    }
    try {
      r_.store->append_event(run_id, "engine", EventKind::error, payload);
      r_.store->update(run_id,
                       [&](RunState& s) {
                         s.phase = Phase::failed;
                         s.pending_question.reset();
                         s.failure = std::string(to_string(at)) + ": " + e.what();
                       },
                       "engine");
    } catch (const std::exception&) {
    }
    throw;
  }
}

void Engine::analyze(const std::string& run_id, const AutRegistration& aut, const ModelClient& model) {
  CodeAnalysis analysis = analyze_codebase(aut.codebase_path, model);
  for (const auto& warning : analysis.warnings) {
    r_.store->append_event(run_id, "planner", EventKind::error, {{"severity", "warning"}, {"message", warning}});
  }
  r_.store->update(run_id, [&](RunState& s) { s.code_analysis = analysis; }, "planner");
}

void Engine::interview_phase(const std::string& run_id, const RunConfig& config, const AutRegistration& aut,
                             const ModelClient& model, AnswerSource& answers) {
  InterviewOptions options;
  options.question_cap = config.question_cap;
  if (options.question_cap == 0) return;
  interview(
      {aut.description, config.testing_focus}, model,
      [&](const std::string& question) {
        r_.store->update(run_id, [&](RunState& s) { s.pending_question = question; }, "planner");
      },
      answers, options,
      [&](const QaPair& pair) {
        r_.store->append_event(run_id, "user", EventKind::user_input,
                               {{"kind", "answer"}, {"question", pair.question}, {"answer", pair.answer}});
        r_.store->update(run_id,
                         [&](RunState& s) {
                           s.user_answers.push_back(pair);
                           s.pending_question.reset();
                         },
                         "planner");
      });
  r_.store->update(run_id, [&](RunState& s) { s.pending_question.reset(); }, "planner");
}

void Engine::search_phase(const std::string& run_id, const RunConfig& config, const AutRegistration& aut,
                          const ModelClient& model) {
  const RunState state = r_.store->snapshot(run_id);
  SearchContext context{aut.description, config.testing_focus, state.user_answers,
                        state.code_analysis ? state.code_analysis->findings : std::string{}};
  SearchOutcome outcome = search_loop(config.search_iterations, config.search_results, r_.search, context, model);
  for (const auto& warning : outcome.warnings) {
    r_.store->append_event(run_id, "planner", EventKind::error, {{"severity", "warning"}, {"message", warning}});
  }
  r_.store->update(run_id, [&](RunState& s) { s.search_findings = outcome.items; }, "planner");
}

void Engine::hypothesize(const std::string& run_id, const RunConfig& config, const AutRegistration& aut,
                         const ModelClient& model) {
  const RunState state = r_.store->snapshot(run_id);
  std::optional<Rubric> provided = aut.provided_rubric;
  if (config.rubric != "auto") provided = load_rubric(config.rubric);
  const Rubric rubric = make_rubric(state, provided, aut.description, model);
  const std::vector<Weakness> weaknesses = generate_weaknesses(state, model, config.max_weaknesses);
  r_.store->update(run_id,
                   [&](RunState& s) {
                     s.rubric = rubric;
                     s.weaknesses = weaknesses;
                   },
                   "planner");
}

void Engine::approve(const std::string& run_id, const ModelClient& model, ApprovalChannel& approvals) {
  class Logged : public ApprovalChannel {
   public:
    Logged(ApprovalChannel& inner, StateStore& store, const std::string& run_id)
        : inner_(inner), store_(store), run_id_(run_id) {}
    Decision decide(const Weakness& w) override {
      Decision d = inner_.decide(w);
      static const char* names[] = {"approve", "revise", "reject"};
      store_.append_event(run_id_, "user", EventKind::user_input,
                          {{"kind", "decision"},
                           {"weakness_id", w.weakness_id},
                           {"decision", names[static_cast<int>(d.kind)]},
                           {"edit", d.edit}});
      return d;
    }

   private:
    ApprovalChannel& inner_;
    StateStore& store_;
    const std::string& run_id_;
  } logged(approvals, *r_.store, run_id);

  const RunState state = r_.store->snapshot(run_id);
  std::vector<Weakness> kept;
  try {
    kept = approval_loop(state.weaknesses, logged, model);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::all_rejected) {
      r_.store->update(run_id,
                       [&](RunState& s) {
                         for (auto& w : s.weaknesses) w.status = WeaknessStatus::rejected;
                       },
                       "planner");
    }
    throw;
  }
  r_.store->update(run_id,
                   [&](RunState& s) {
                     for (auto& w : s.weaknesses) {
                       auto it = std::find_if(kept.begin(), kept.end(),
                                              [&](const Weakness& k) { return k.weakness_id == w.weakness_id; });
                       if (it == kept.end()) {
                         w.status = WeaknessStatus::rejected;
                       } else {
                         w = *it;
                       }
                     }
                   },
                   "planner");
}

void Engine::test(const std::string& run_id, const RunConfig& config, const AutRegistration& aut) {
  const RunState state = r_.store->snapshot(run_id);
  ThreadConfig thread_config;
  thread_config.k_max = config.k_max;
  thread_config.epsilon = config.epsilon;
  thread_config.params = state.difficulty_params();
  thread_config.seed = config.seed;

  std::vector<ModelClient> clients;
  const auto active = state.active_weaknesses();
  clients.reserve(active.size());
  for (const Weakness* w : active) clients.push_back(client_for(run_id, "thread:" + w->weakness_id));

  std::vector<std::future<ThreadResult>> workers;
  for (std::size_t i = 0; i < active.size(); ++i) {
    ThreadEnvironment env{r_.store, run_id, r_.auts, aut.aut_id, aut.description, &clients[i], *state.rubric};
    workers.push_back(std::async(std::launch::async, [env, weakness = *active[i], &thread_config] {
      return run_thread(env, weakness, thread_config);
    }));
  }
  for (auto& worker : workers) worker.get();
}

void Engine::report(const std::string& run_id) {
  const RunState state = r_.store->snapshot(run_id);
  const ReportStatistics statistics = aggregate_run(state);
  Report report = compose_report(statistics, state, client_for(run_id, "reporter"));
  const std::string markdown = render_markdown(report, state);
  if (const auto problems = verify_report(report, markdown, state); !problems.empty()) {
    throw Error(ErrorCode::invariant_violation, "report verification failed: " + problems.front(),
                {{"problems", problems}});
  }
  if (r_.store->persistent()) {
    r_.store->write_artifact(run_id, "report.json", json(report).dump(2) + "\n");
    r_.store->write_artifact(run_id, "report.md", markdown);
  }
  r_.store->update(run_id,
                   [&](RunState& s) {
                     s.report = report;
                     s.phase = Phase::done;
                   },
                   "reporter");
}

}  // namespace ata
