// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ata/error.hpp"
#include "ata/judge.hpp"
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

oracle::Real exact_aggregate(const std::vector<double>& scores, const std::vector<double>& weights) {
  oracle::Real num = 0, den = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    num += oracle::Real(weights[i]) * oracle::Real(scores[i]);
    den += oracle::Real(weights[i]);
  }
  return (num / den - 1) * 9 / 4 + 1;
}

TestScenario finished(Outcome outcome, std::vector<Turn> turns) {
  TestScenario sc;
  sc.scenario_id = "W1-s1";
  sc.weakness_id = "W1";
  sc.transcript = std::move(turns);
  sc.outcome = outcome;
  sc.persona = {"calm", "book a trip", "plain"};
  return sc;
}

}  // namespace

TEST_SUITE("judge") {
  TEST_CASE("affine map endpoints are exact") {
    CHECK(aggregate({1, 1, 1, 1}) == 1.0);
    CHECK(aggregate({3, 3, 3, 3}) == 5.5);
    CHECK(aggregate({5, 5, 5, 5}) == 10.0);
    CHECK(aggregate({5, 3}) == 7.75);
  }

  TEST_CASE("aggregation is strictly monotone over every 4-criterion tuple") {
    int checked = 0;
    for (int a = 1; a <= 5; ++a)
      for (int b = 1; b <= 5; ++b)
        for (int c = 1; c <= 5; ++c)
          for (int d = 1; d <= 5; ++d) {
            const std::vector<double> base{double(a), double(b), double(c), double(d)};
            const double s = aggregate(base);
            CHECK(s >= 1.0);
            CHECK(s <= 10.0);
            for (std::size_t i = 0; i < 4; ++i) {
              if (base[i] == 5) continue;
              auto up = base;
              up[i] += 1;
              CHECK(aggregate(up) > s);
            }
            ++checked;
          }
    CHECK(checked == 625);
  }

  TEST_CASE("weighted aggregation matches the oracle") {
    const std::vector<double> scores{1.5, 4, 2.25, 5};
    const std::vector<double> weights{0.5, 2, 1, 3};
    CHECK(std::abs(aggregate(scores, weights) - oracle::to_double(exact_aggregate(scores, weights))) < 1e-12);
    Rubric r = testing_support::sample_rubric(2);
    r.criteria[0].weight = 3;
    const double by_name = aggregate({{"criterion 1", {5, ""}}, {"criterion 2", {1, ""}}}, r);
    CHECK(by_name == doctest::Approx(oracle::to_double(exact_aggregate({5, 1}, {3, 1}))).epsilon(1e-12));
  }

  TEST_CASE("aggregation rejects malformed input") {
    CHECK(code_of([] { aggregate({}); }) == ErrorCode::domain_error);
    CHECK(code_of([] { aggregate({0.5}); }) == ErrorCode::domain_error);
    CHECK(code_of([] { aggregate({5.5}); }) == ErrorCode::domain_error);
    CHECK(code_of([] { aggregate({3}, {0}); }) == ErrorCode::domain_error);
    CHECK(code_of([] { aggregate({3, 4}, {1}); }) == ErrorCode::domain_error);
    const Rubric r = testing_support::sample_rubric(2);
    CHECK(code_of([&] { aggregate({{"criterion 1", {3, ""}}}, r); }) == ErrorCode::domain_error);
    CHECK(code_of([&] {
            aggregate({{"criterion 1", {3, ""}}, {"criterion 2", {3, ""}}, {"extra", {3, ""}}}, r);
          }) == ErrorCode::domain_error);
  }

  TEST_CASE("failure status line names the first failed agent turn") {
    auto sc = finished(Outcome::early_failure,
                       {{Speaker::simulated_user, "a", TurnStatus::ok}, {Speaker::aut, "b", TurnStatus::ok},
                        {Speaker::simulated_user, "c", TurnStatus::ok}, {Speaker::aut, "", TurnStatus::timeout}});
    CHECK(failure_status_line(sc) == "AGENT FAILURE: status timeout on turn 2; the dialogue ended early.");
    sc.transcript.pop_back();
    CHECK(failure_status_line(sc).empty());
  }

  TEST_CASE("judge schema is derived from the rubric") {
    const Rubric r = testing_support::sample_rubric(2);
    const json schema = judge_schema(r);
    const json obs = {{"strengths", json::array()}, {"weaknesses", json::array()},
                      {"dialogue_examples", json::array()}, {"guidance", ""}};
    CHECK(schema::validate({{"criterion_scores", {{"criterion 1", {{"score", 3}, {"reasoning", "r"}}},
                                                  {"criterion 2", {{"score", 5}, {"reasoning", "r"}}}}},
                            {"observations", obs}},
                           schema)
              .empty());
    CHECK_FALSE(schema::validate({{"criterion_scores", {{"criterion 1", {{"score", 6}, {"reasoning", "r"}}},
                                                        {"criterion 2", {{"score", 5}, {"reasoning", "r"}}}}},
                                  {"observations", obs}},
                                 schema)
                    .empty());
    CHECK_FALSE(schema::validate({{"criterion_scores", {{"criterion 1", {{"score", 3}, {"reasoning", "r"}}}}},
                                  {"observations", obs}},
                                 schema)
                    .empty());
  }

  TEST_CASE("evaluate computes the overall score itself and surfaces agent failures") {
    std::vector<BackendRequest> seen;
    auto gateway = std::make_unique<LlmGateway>();
    auto reference = make_reference_responder(0);
    gateway->register_backend("m", std::make_shared<MockBackend>(json::object(), [&](const BackendRequest& req) {
      seen.push_back(req);
      return reference(req);
    }));
    gateway->route_all("m");
    ModelClient model(*gateway);
    const Rubric rubric = testing_support::sample_rubric(3);

    auto crash = finished(Outcome::early_failure, {{Speaker::simulated_user, "hi", TurnStatus::ok},
                                                   {Speaker::aut, "", TurnStatus::crash}});
    const std::vector<ChatMessage> thread = {{"system", "generator context"}, {"user", "made test 1"}};
    const JudgeResult r = evaluate(crash, rubric, thread, model);
    CHECK(r.criterion_scores.size() == 3);
    CHECK(r.overall == aggregate(r.criterion_scores, rubric));
    CHECK(r.overall <= 2.0 + 1e-12);

    REQUIRE(seen.size() == 1);
    CHECK(seen[0].role == ModelRole::judge_deep);
    CHECK(seen[0].messages[0].content == "generator context");
    CHECK(seen[0].messages.back().content.starts_with("AGENT FAILURE: status crash on turn 1"));
    CHECK(find_context(seen[0].messages)->at("failure_status").get<std::string>().starts_with("AGENT FAILURE"));

    TestScenario pending;
    CHECK(code_of([&] { evaluate(pending, rubric, thread, model); }) == ErrorCode::precondition);
  }

  TEST_CASE("model-supplied overall scores are ignored") {
    auto gateway = testing_support::mock_gateway(0, {{"defaults", {{"judge_deep", json{
        {"overall", 10},
        {"criterion_scores", {{"criterion 1", {{"score", 2}, {"reasoning", "x"}}}}},
        {"observations", {{"strengths", json::array()}, {"weaknesses", json::array()},
                          {"dialogue_examples", json::array()}, {"guidance", "g"}}}}.dump()}}}});
    std::dynamic_pointer_cast<MockBackend>(gateway->backend("mock"))->set_responder({});
    ModelClient model(*gateway);
    auto sc = finished(Outcome::completed, {{Speaker::simulated_user, "hi", TurnStatus::ok},
                                            {Speaker::aut, "hello", TurnStatus::ok}});
    const JudgeResult r = evaluate(sc, testing_support::sample_rubric(1), {}, model);
    CHECK(r.overall == 3.25);
  }
}
