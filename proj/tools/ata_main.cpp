// SPDX-License-Identifier: Apache-2.0
//
// ata run    drive one run to a report in the terminal
// ata serve  HTTP service for the web UI
// ata qa     ask a follow-up question about a finished run
// ata auts   list registered agents
// ata calc, analyze, simulate, verify   offline checks, see commands.hpp
#include <unistd.h>

#include <CLI11.hpp>
#include <csignal>
#include <iostream>

#include "ata/error.hpp"
#include "ata/mock_world.hpp"
#include "ata/service.hpp"
#include "commands.hpp"

namespace fs = std::filesystem;
using namespace ata;

namespace {

/// Prompts on stderr, reads stdin. EOF ends the interview as "no answer".
class TerminalAnswers : public AnswerSource {
 public:
  std::optional<std::string> answer(const std::string& question) override {
    std::cerr << "\n? " << question << "\n> " << std::flush;
    std::string line;
    if (!std::getline(std::cin, line)) return std::string{};
    return line;
  }
};

class TerminalApprovals : public ApprovalChannel {
 public:
  Decision decide(const Weakness& w) override {
    std::cerr << "\n[" << w.weakness_id << "] " << w.name << "\n  trigger: " << w.trigger_conditions
              << "\n  expected failure: " << w.expected_failure << "\n(a)pprove, (r)evise, (x) reject [a]: "
              << std::flush;
    std::string line;
    if (!std::getline(std::cin, line) || line.empty() || line[0] == 'a') return {};
    if (line[0] == 'x') return {Decision::Kind::reject, {}};
    if (line[0] == 'r') {
      std::cerr << "edit: " << std::flush;
      std::string edit;
      std::getline(std::cin, edit);
      if (!edit.empty()) return {Decision::Kind::revise, edit};
    }
    return {};
  }
};

std::vector<std::string> load_answers(const fs::path& path) {
  const json doc = json::parse(read_file(path));
  const json& list = doc.is_object() ? doc.at("answers") : doc;
  return list.get<std::vector<std::string>>();
}

std::map<std::string, Decision> load_decisions(const fs::path& path) {
  std::map<std::string, Decision> out;
  for (const auto& [wid, body] : json::parse(read_file(path)).items()) out[wid] = decision_from_json(body);
  return out;
}

int report_error(const std::optional<Phase>& phase, const Error& e) {
  std::cerr << "error [" << (phase ? std::string(to_string(*phase)) : std::string("setup")) << "] " << e.what() << "\n";
  if (!e.details().is_null()) std::cerr << e.details().dump(2) << "\n";
  return exit_code_for(phase, e.code());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial testing harness for conversational agents"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run the full pipeline against one agent");
  RunConfig config;
  std::optional<fs::path> mock_llm, backend_config, auts_file, answers_file, decisions_file, search_corpus;
  std::optional<std::string> search_endpoint;
  std::string search_key_env;
  fs::path runs_dir = "runs";
  std::string run_id;
  bool approve_all = false;
  bool quiet = false;
  run->add_option("--aut", config.aut_id, "Agent id")->required();
  run->add_option("--rubric", config.rubric, "Rubric file, or 'auto'")->capture_default_str();
  run->add_option("--focus", config.testing_focus, "Testing focus");
  run->add_option("--max-weaknesses", config.max_weaknesses)->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--k-max", config.k_max, "Tests per weakness")->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--epsilon", config.epsilon, "Convergence threshold")->capture_default_str();
  run->add_option("--eta", config.eta, "Step size")->capture_default_str();
  run->add_flag("--ablate-evidence", config.ablate_evidence, "Skip code analysis and evidence search");
  run->add_option("--seed", config.seed)->capture_default_str();
  run->add_option("--search-iterations", config.search_iterations)->capture_default_str();
  run->add_option("--search-results", config.search_results)->capture_default_str();
  run->add_option("--question-cap", config.question_cap)->capture_default_str();
  run->add_option("--mock-llm", mock_llm, "Mock model directory (script.json, answers.json, corpus.json)");
  run->add_option("--backend-config", backend_config, "Gateway config JSON");
  run->add_option("--auts", auts_file, "Extra agent registrations (auts.json)");
  run->add_option("--answers", answers_file, "Interview answers JSON list");
  run->add_option("--decisions", decisions_file, "Approval decisions {weakness_id: {decision, edit}}");
  run->add_flag("--approve-all", approve_all, "Approve every proposed weakness");
  run->add_option("--search-corpus", search_corpus, "Offline search corpus JSON");
  run->add_option("--search-endpoint", search_endpoint, "HTTP search API");
  run->add_option("--search-key-env", search_key_env, "Env var holding the search API key");
  run->add_option("--runs-dir", runs_dir)->capture_default_str();
  run->add_option("--run-id", run_id, "Fixed run id (default: generated)");
  run->add_flag("-q,--quiet", quiet);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  ServiceOptions service;
  serve->add_option("--host", service.host)->capture_default_str();
  serve->add_option("--port", service.port)->capture_default_str();
  serve->add_option("--runs-dir", service.runs_dir)->capture_default_str();
  serve->add_option("--auts", service.auts_file);
  serve->add_option("--mock-llm", service.backends.mock_llm);
  serve->add_option("--backend-config", service.backends.backend_config);
  serve->add_option("--search-corpus", service.search_corpus);
  serve->add_option("--search-endpoint", service.search_endpoint);

  // qa
  auto* qa = app.add_subcommand("qa", "Ask about a finished run");
  std::string qa_run, question;
  fs::path qa_runs_dir = "runs";
  BackendSpec qa_backends;
  qa->add_option("--run-id", qa_run)->required();
  qa->add_option("--question", question)->required();
  qa->add_option("--runs-dir", qa_runs_dir)->capture_default_str();
  qa->add_option("--mock-llm", qa_backends.mock_llm);
  qa->add_option("--backend-config", qa_backends.backend_config);

  auto* list = app.add_subcommand("auts", "List registered agents");
  std::optional<fs::path> list_auts;
  list->add_option("--auts", list_auts);

  app.add_subcommand("calc", "Difficulty and judge arithmetic, JSON lines on stdin");

  auto* analyze = app.add_subcommand("analyze", "Code analysis of a directory, or checks of a graph file");
  cli::AnalyzeOptions analyze_options;
  analyze->add_option("--codebase", analyze_options.codebase);
  analyze->add_option("--graph", analyze_options.graph, "Graph JSON {nodes, edges}, '-' for stdin");
  analyze->add_option("--mock-llm", analyze_options.mock_llm);
  analyze->add_option("--backend-config", analyze_options.backend_config);
  analyze->add_option("--seed", analyze_options.seed)->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "Difficulty homing against a boundary agent");
  cli::SimulateOptions sim;
  simulate->add_option("--boundary", sim.boundary)->required();
  simulate->add_option("--noise", sim.noise)->capture_default_str();
  simulate->add_option("--rounds", sim.rounds)->capture_default_str();
  simulate->add_option("--epsilon", sim.epsilon, "Convergence threshold, 0 runs every round")->capture_default_str();
  simulate->add_option("--eta", sim.eta)->capture_default_str();
  simulate->add_option("--runs", sim.runs)->capture_default_str();
  simulate->add_option("--first-seed", sim.first_seed)->capture_default_str();

  auto* verify = app.add_subcommand("verify", "Recompute the numbers of a stored report");
  std::string verify_run;
  fs::path verify_runs_dir = "runs";
  verify->add_option("--run-id", verify_run)->required();
  verify->add_option("--runs-dir", verify_runs_dir)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("calc")) return cli::calc(std::cin, std::cout);
    if (*analyze) return cli::analyze(analyze_options, std::cin, std::cout);
    if (*simulate) return cli::simulate(sim, std::cout);
    if (*verify) return cli::verify(verify_runs_dir, verify_run, std::cout);
  } catch (const Error& e) {
    return report_error(std::nullopt, e);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  if (*list) {
    try {
      const AutRegistry registry = make_registry(list_auts);
      for (const auto& id : registry.ids()) std::cout << id << "\t" << registry.get(id).description << "\n";
      return 0;
    } catch (const Error& e) {
      return report_error(std::nullopt, e);
    }
  }

  if (*serve) {
    try {
      Service svc(service);
      std::cerr << "serving on http://" << service.host << ":" << service.port << "\n";
      svc.run();
      return 0;
    } catch (const Error& e) {
      return report_error(std::nullopt, e);
    }
  }

  if (*qa) {
    try {
      StateStore store(StoreOptions{qa_runs_dir, {}});
      store.open_run(qa_run);
      auto gateway = make_gateway(qa_backends, store.snapshot(qa_run).settings.seed);
      const ModelClient model(*gateway, [&](const json& record) {
        store.append_event(qa_run, "reporter", EventKind::model_call, record);
      });
      std::cout << report_qa(store, qa_run, question, model) << "\n";
      return 0;
    } catch (const Error& e) {
      return report_error(std::nullopt, e);
    }
  }

  // run
  std::optional<Phase> phase;
  std::unique_ptr<StateStore> store;
  try {
    if (mock_llm) {
      if (!answers_file && fs::exists(*mock_llm / "answers.json")) answers_file = *mock_llm / "answers.json";
      if (!search_corpus && !search_endpoint && fs::exists(*mock_llm / "corpus.json")) {
        search_corpus = *mock_llm / "corpus.json";
      }
    }
    const AutRegistry registry = make_registry(auts_file);
    auto gateway = make_gateway({backend_config, mock_llm}, config.seed);
    auto search = make_search(search_corpus, search_endpoint, search_key_env);
    fs::create_directories(runs_dir);
    store = std::make_unique<StateStore>(StoreOptions{runs_dir, {}});
    Engine engine({store.get(), &registry, gateway.get(), search.get()});
    run_id = engine.create(config, run_id);
    phase = Phase::selecting;
    std::cerr << "run " << run_id << " against " << config.aut_id << "\n";

    std::unique_ptr<AnswerSource> answers;
    if (answers_file) {
      answers = std::make_unique<ScriptedAnswers>(load_answers(*answers_file));
    } else {
      answers = std::make_unique<TerminalAnswers>();
    }
    std::unique_ptr<ApprovalChannel> approvals;
    if (decisions_file) {
      approvals = std::make_unique<ScriptedApprovals>(load_decisions(*decisions_file));
    } else if (approve_all || !isatty(STDIN_FILENO)) {
      approvals = std::make_unique<ScriptedApprovals>();
    } else {
      approvals = std::make_unique<TerminalApprovals>();
    }

    std::atomic<bool> finished{false};
    std::thread progress;
    if (!quiet) {
      progress = std::thread([&] {
        auto sub = store->subscribe(run_id, 0);
        while (!finished) {
          auto event = sub->next(std::chrono::milliseconds(100));
          if (!event) continue;
          if (event->kind == EventKind::judge_result) {
            std::cerr << "  " << event->payload["scenario_id"].get<std::string>() << " d="
                      << event->payload["difficulty"].dump() << " outcome=" << event->payload["outcome"].get<std::string>()
                      << " s=" << event->payload["overall"].dump() << "\n";
          } else if (event->kind == EventKind::state_commit) {
            for (const auto& op : event->payload["patch"]) {
              if (op.value("path", std::string{}) == "/phase") {
                std::cerr << "phase " << op["value"].get<std::string>() << "\n";
              }
            }
          }
        }
      });
    }
    try {
      engine.execute(run_id, config, {answers.get(), approvals.get()});
    } catch (...) {
      finished = true;
      if (progress.joinable()) progress.join();
      throw;
    }
    finished = true;
    if (progress.joinable()) progress.join();

    const RunState state = store->snapshot(run_id);
    std::cout << "run_id: " << run_id << "\n";
    std::cout << "overall_score: " << format_number(state.report->overall_score) << "\n";
    std::cout << "report: " << (store->run_dir(run_id) / "report.json").string() << "\n";
    return 0;
  } catch (const Error& e) {
    if (phase && store) {
      for (const auto& event : store->events(run_id)) {
        if (event.kind == EventKind::error && event.actor == "engine" && event.payload.contains("phase")) {
          phase = phase_from_string(event.payload["phase"].get<std::string>());
        }
      }
    }
    return report_error(phase, e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
