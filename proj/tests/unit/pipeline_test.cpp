// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <thread>

#include "ata/error.hpp"
#include "ata/pipeline.hpp"
#include "ata/service.hpp"
#include "support/helpers.hpp"

using namespace ata;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ata::Error");
  return ErrorCode::io;
}

std::vector<std::string> fixture_answers() {
  std::ifstream in(testing_support::fixtures() / "run1" / "answers.json");
  return json::parse(in).get<std::vector<std::string>>();
}

/// One engine over an in-memory store, the fixture agents and the fixture corpus.
struct Rig {
  explicit Rig(std::uint64_t seed = 0)
      : gateway(make_gateway({std::nullopt, testing_support::fixtures() / "run1"}, seed)),
        search(make_search(testing_support::fixtures() / "run1" / "corpus.json", std::nullopt)),
        auts(make_registry(testing_support::fixtures() / "auts.json")),
        engine({&store, &auts, gateway.get(), search.get()}) {}

  std::string run(const RunConfig& config, ApprovalChannel* approvals = nullptr, const std::string& id = {}) {
    const std::string run_id = engine.create(config, id);
    ScriptedAnswers answers(fixture_answers());
    ScriptedApprovals all;
    engine.execute(run_id, config, {&answers, approvals ? approvals : &all});
    return run_id;
  }

  StateStore store;
  std::unique_ptr<LlmGateway> gateway;
  std::unique_ptr<SearchBackend> search;
  AutRegistry auts;
  Engine engine;
};

RunConfig travel(std::uint64_t seed = 7) {
  RunConfig c;
  c.aut_id = "travel-agent";
  c.testing_focus = "multi-constraint trip planning";
  c.seed = seed;
  return c;
}

std::size_t scenario_count(const RunState& s) {
  std::size_t n = 0;
  for (const auto& [wid, list] : s.scenarios) n += list.size();
  return n;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("a full mock run reaches done with a verifiable report") {
    Rig rig;
    const auto id = rig.run(travel());
    const RunState s = rig.store.snapshot(id);
    CHECK(s.phase == Phase::done);
    CHECK_FALSE(s.failure.has_value());
    REQUIRE(s.report.has_value());
    CHECK(s.code_analysis.has_value());
    CHECK_FALSE(s.search_findings.empty());
    CHECK(s.user_answers.size() == 3);
    CHECK(s.rubric.has_value());
    CHECK(s.weaknesses.size() == 5);
    CHECK(scenario_count(s) <= 15);
    CHECK(scenario_count(s) >= 5);
    for (const auto& [wid, list] : s.scenarios) {
      CHECK(list.size() <= 3);
      for (const auto& sc : list) CHECK(sc.outcome.has_value());
    }
    CHECK(verify_report(*s.report, render_markdown(*s.report, s), s).empty());
    CHECK(s.report->skipped_stages.empty());
    CHECK(canonical_dump(StateStore::replay(rig.store.events(id))) == canonical_dump(s));
  }

  TEST_CASE("same seed, same run") {
    Rig a(3);
    Rig b(3);
    const auto ia = a.run(travel(3), nullptr, "fixed");
    const auto ib = b.run(travel(3), nullptr, "fixed");
    CHECK(canonical_dump(a.store.snapshot(ia)) == canonical_dump(b.store.snapshot(ib)));
  }

  TEST_CASE("ablation skips code analysis and evidence search") {
    Rig rig;
    RunConfig c = travel();
    c.ablate_evidence = true;
    const RunState s = rig.store.snapshot(rig.run(c));
    CHECK(s.phase == Phase::done);
    CHECK_FALSE(s.code_analysis.has_value());
    CHECK(s.search_findings.empty());
    REQUIRE(s.report.has_value());
    CHECK(s.report->skipped_stages == std::vector<std::string>{"code-analysis", "evidence-search"});
    CHECK(render_markdown(*s.report, s).find("Skipped stages") != std::string::npos);
    for (const auto& w : s.weaknesses) {
      for (const auto& p : w.provenance) CHECK(p.rfind("answer:", 0) == 0);
    }
  }

  TEST_CASE("rejected weaknesses are never tested") {
    Rig rig;
    ScriptedApprovals decisions({{"W1", {Decision::Kind::reject, ""}},
                                 {"W2", {Decision::Kind::revise, "Only when the budget changes mid-dialogue."}}});
    const RunState s = rig.store.snapshot(rig.run(travel(), &decisions));
    CHECK(s.phase == Phase::done);
    CHECK(s.find_weakness("W1")->status == WeaknessStatus::rejected);
    CHECK(s.find_weakness("W2")->status == WeaknessStatus::revised);
    CHECK(s.scenarios.count("W1") == 0);
    CHECK(s.scenarios.count("W2") == 1);
    CHECK(s.report->per_weakness.count("W1") == 0);
  }

  TEST_CASE("an agent that always crashes fails the run at reporting") {
    Rig rig;
    RunConfig c = travel();
    c.aut_id = "hotel-agent";
    c.max_weaknesses = 2;
    const auto id = rig.engine.create(c);
    ScriptedAnswers answers(fixture_answers());
    ScriptedApprovals all;
    try {
      rig.engine.execute(id, c, {&answers, &all});
      FAIL("expected no_scored_scenarios");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::no_scored_scenarios);
      CHECK(e.details()["early_failures"].size() == 6);
    }
    const RunState s = rig.store.snapshot(id);
    CHECK(s.phase == Phase::failed);
    REQUIRE(s.failure.has_value());
    CHECK(s.failure->find("none produced a score") != std::string::npos);
    CHECK_FALSE(s.report.has_value());
    for (const auto& [wid, list] : s.scenarios) {
      // Early failures add no history, so k_max bounds the attempts.
      CHECK(list.size() == 3);
      for (const auto& sc : list) {
        CHECK(sc.outcome == Outcome::early_failure);
        CHECK(sc.user_turns() == 3);
      }
    }
  }

  TEST_CASE("setup errors and recorded failures") {
    Rig rig;
    RunConfig c = travel();
    c.aut_id = "nobody";
    CHECK(code_of([&] { rig.engine.create(c); }) == ErrorCode::registration);
    c = travel();
    c.k_max = 0;
    CHECK(code_of([&] { rig.engine.create(c); }) == ErrorCode::invalid_config);
    c = travel();
    c.rubric = (testing_support::fixtures() / "missing.json").string();
    CHECK_THROWS_AS(rig.engine.create(c), Error);
    CHECK(rig.store.run_ids().empty());
  }

  TEST_CASE("exit codes") {
    CHECK(exit_code_for(std::nullopt, ErrorCode::invalid_config) == 2);
    CHECK(exit_code_for(std::nullopt, ErrorCode::registration) == 3);
    CHECK(exit_code_for(std::nullopt, ErrorCode::invalid_rubric) == 4);
    CHECK(exit_code_for(Phase::analyzing, ErrorCode::timeout) == 11);
    CHECK(exit_code_for(Phase::reporting, ErrorCode::no_scored_scenarios) == 17);
  }

  TEST_CASE("config json round-trip") {
    RunConfig c = travel(99);
    c.k_max = 4;
    c.ablate_evidence = true;
    const RunConfig back = json(c).get<RunConfig>();
    CHECK(json(back) == json(c));
    CHECK(json{{"aut_id", "x"}}.get<RunConfig>().k_max == 3);
  }

  TEST_CASE("mailboxes feed a blocked engine from another thread") {
    AnswerQueue q;
    std::thread t([&] {
      q.push("first");
      q.close();
    });
    CHECK(q.answer("?") == "first");
    CHECK_FALSE(q.answer("?").has_value());
    t.join();

    DecisionBoard board;
    const auto w = testing_support::sample_weakness("W4");
    std::thread u([&] { board.post("W4", {Decision::Kind::reject, ""}); });
    CHECK(board.decide(w).kind == Decision::Kind::reject);
    u.join();
    CHECK(decision_from_json({{"decision", "revise"}, {"edit", "x"}}).kind == Decision::Kind::revise);
    CHECK(code_of([] { decision_from_json({{"decision", "maybe"}}); }) == ErrorCode::invalid_config);
  }
}
