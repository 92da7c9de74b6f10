// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>

#include "ata/error.hpp"
#include "ata/reporter.hpp"
#include "ata/schema.hpp"
#include "support/helpers.hpp"
#include "support/oracle.hpp"

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

TestScenario judged(const std::string& wid, int index, double d, double s) {
  TestScenario sc;
  sc.weakness_id = wid;
  sc.index = index;
  sc.scenario_id = wid + "-" + std::to_string(index);
  sc.difficulty = d;
  sc.outcome = Outcome::completed;
  sc.transcript = {{Speaker::simulated_user, "plan a trip"}, {Speaker::aut, "here is a plan"}};
  JudgeResult j;
  j.overall = s;
  sc.judge_result = j;
  return sc;
}

TestScenario crashed(const std::string& wid, int index, double d) {
  TestScenario sc = judged(wid, index, d, 1);
  sc.outcome = Outcome::early_failure;
  sc.judge_result->observations.weaknesses = {"agent crashed on turn 1"};
  return sc;
}

/// Two weaknesses: W1 with the chain (5.5, 10), (7.9279.., 5); W2 with one
/// early failure then (5.5, 4); W3 rejected.
RunState reporting_state() {
  RunState s;
  s.run_id = "run-r";
  s.aut_ref = "travel-agent";
  s.phase = Phase::reporting;
  s.rubric = testing_support::sample_rubric(2);
  auto w1 = testing_support::sample_weakness("W1");
  auto w2 = testing_support::sample_weakness("W2");
  w2.name = "Tool failure masking";
  auto w3 = testing_support::sample_weakness("W3");
  w3.status = WeaknessStatus::rejected;
  s.weaknesses = {w1, w2, w3};
  const double d2 = step(5.5, 10);
  s.scenarios["W1"] = {judged("W1", 1, 5.5, 10), judged("W1", 2, d2, 5)};
  s.scenarios["W2"] = {crashed("W2", 1, 5.5), judged("W2", 2, 5.5, 4)};
  return s;
}

}  // namespace

TEST_SUITE("reporter") {
  TEST_CASE("statistics are recomputed from the state") {
    const RunState s = reporting_state();
    const auto stats = aggregate_run(s);
    using oracle::Real;
    const Real d2 = oracle::step(Real("5.5"), Real(10));
    const Real f1 = oracle::posterior({{Real("5.5"), Real(10)}, {d2, Real(5)}});
    const Real f2 = oracle::posterior({{Real("5.5"), Real(4)}});
    CHECK(stats.per_weakness.size() == 2);
    CHECK(stats.per_weakness.at("W1").final_score.value() == doctest::Approx(oracle::to_double(f1)).epsilon(1e-12));
    CHECK(stats.per_weakness.at("W2").final_score.value() == doctest::Approx(oracle::to_double(f2)).epsilon(1e-12));
    CHECK(stats.overall_score == doctest::Approx(oracle::to_double((f1 + f2) / 2)).epsilon(1e-12));
    CHECK(stats.totals.scenarios_tested == 4);
    CHECK(stats.totals.scored_scenarios == 3);
    CHECK(stats.totals.early_failures == 1);
    CHECK(stats.totals.mean_score == doctest::Approx(19.0 / 3));
    CHECK(stats.totals.mean_difficulty == doctest::Approx((5.5 + oracle::to_double(d2) + 5.5) / 3));
    CHECK(stats.per_weakness.at("W2").early_failure_count == 1);
    CHECK(stats.per_weakness.at("W2").scores == std::vector<double>{4});
  }

  TEST_CASE("finals 7.92790 and 5.5 average to 6.71395") {
    RunState s = reporting_state();
    s.scenarios["W1"] = {judged("W1", 1, 5.5, 10)};
    s.scenarios["W2"] = {judged("W2", 1, 5.5, 5.5)};
    const auto stats = aggregate_run(s);
    CHECK(*stats.per_weakness.at("W1").final_score == doctest::Approx(7.92790).epsilon(1e-6));
    CHECK(*stats.per_weakness.at("W2").final_score == 5.5);
    CHECK(stats.overall_score == doctest::Approx(6.71395).epsilon(1e-6));
    const std::string out = inject_numbers("Overall {{overall_score}}.", stats);
    CHECK(out == "Overall " + format_number(stats.overall_score) + ".");
  }

  TEST_CASE("one neutral weakness is its own fixed point") {
    RunState s = reporting_state();
    s.weaknesses.resize(1);
    s.scenarios.erase("W2");
    s.scenarios["W1"] = {judged("W1", 1, 5.5, 5.5)};
    CHECK(aggregate_run(s).overall_score == 5.5);
  }

  TEST_CASE("a run with no scored scenario has no overall score") {
    RunState s = reporting_state();
    s.scenarios["W1"] = {crashed("W1", 1, 5.5)};
    s.scenarios["W2"] = {crashed("W2", 1, 5.5)};
    try {
      aggregate_run(s);
      FAIL("expected no_scored_scenarios");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::no_scored_scenarios);
      CHECK(e.details()["scenarios_tested"] == 2);
      CHECK(e.details()["early_failures"].size() == 2);
    }
  }

  TEST_CASE("statistics need the reporting phase") {
    RunState s = reporting_state();
    s.phase = Phase::testing;
    CHECK(code_of([&] { aggregate_run(s); }) == ErrorCode::precondition);
  }

  TEST_CASE("numbers enter the narrative only through placeholders") {
    const auto stats = aggregate_run(reporting_state());
    const std::string out = inject_numbers(
        "Overall {{overall_score}} over {{scenarios_tested}} tests; W1 at {{final:W1}}, model guessed 7.25 and "
        "W9 is {{final:W9}}; version 2 stays.",
        stats);
    CHECK(out.find(format_number(stats.overall_score)) != std::string::npos);
    CHECK(out.find("over 4 tests") != std::string::npos);
    CHECK(out.find(format_number(*stats.per_weakness.at("W1").final_score)) != std::string::npos);
    CHECK(out.find("7.25") == std::string::npos);
    CHECK(out.find("W9 is [n/a]") != std::string::npos);
    CHECK(out.find("version 2 stays") != std::string::npos);
  }

  TEST_CASE("format_number round-trips") {
    for (double v : {6.713951234567891, 5.5, 1.0, 10.0, 1.0 / 3}) CHECK(std::stod(format_number(v)) == v);
  }

  TEST_CASE("skipped stages follow the ablation flag") {
    RunState s = reporting_state();
    CHECK(skipped_stages(s).empty());
    s.settings.ablate_evidence = true;
    CHECK(skipped_stages(s) == std::vector<std::string>{"code-analysis", "evidence-search"});
  }

  TEST_CASE("composed report verifies, tampering does not") {
    auto gateway = testing_support::mock_gateway();
    const ModelClient model(*gateway);
    RunState s = reporting_state();
    const Report report = compose_report(aggregate_run(s), s, model);
    const std::string md = render_markdown(report, s);
    CHECK(verify_report(report, md, s).empty());
    CHECK(schema::validate(json(report), report_schema()).empty());
    CHECK(report.per_weakness.count("W3") == 0);

    Report bad = report;
    bad.overall_score += 1e-6;
    CHECK_FALSE(verify_report(bad, render_markdown(bad, s), s).empty());
    bad = report;
    bad.per_weakness["W2"].early_failure_count = 0;
    CHECK_FALSE(verify_report(bad, md, s).empty());
    CHECK_FALSE(verify_report(report, md + "\nAlso 3.14159.\n", s).empty());
  }

  TEST_CASE("report schema file matches the built-in schema") {
    std::ifstream in(testing_support::source_dir() / "schemas" / "report.schema.json");
    REQUIRE(in);
    CHECK(json::parse(in) == report_schema());
  }

  TEST_CASE("follow-up questions use derived facts and are logged") {
    auto gateway = testing_support::mock_gateway();
    const ModelClient model(*gateway);
    StateStore store;
    const auto id = store.create_run(reporting_state());
    CHECK(code_of([&] { report_qa(store, id, "which weakness was lowest?", model); }) == ErrorCode::precondition);

    store.update(id, [&](RunState& s) {
      s.report = compose_report(aggregate_run(s), s, model);
      s.phase = Phase::done;
    }, "reporter");
    const std::string answer = report_qa(store, id, "Which weakness scored lowest?", model);
    CHECK(answer.find("W2") != std::string::npos);
    const auto events = store.events(id);
    REQUIRE_FALSE(events.empty());
    CHECK(events.back().kind == EventKind::user_input);
    CHECK(events.back().payload["kind"] == "qa");
    CHECK(events.back().payload["scenarios_in_context"] == 0);
    report_qa(store, id, "What went wrong in W2-1?", model);
    CHECK(store.events(id).back().payload["scenarios_in_context"] == 1);
  }
}
