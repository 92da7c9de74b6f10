// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>
#include <httplib.h>

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "ata/service.hpp"
#include "support/helpers.hpp"

using namespace ata;

namespace {

struct Server {
  Server() : service(options(dir)), client("127.0.0.1", service.start()) {
    client.set_read_timeout(20, 0);
  }
  ~Server() { service.stop(); }

  static ServiceOptions options(const testing_support::TempDir& dir) {
    ServiceOptions o;
    o.port = 0;
    o.runs_dir = dir.path() / "runs";
    o.auts_file = testing_support::fixtures() / "auts.json";
    o.backends.mock_llm = testing_support::fixtures() / "run1";
    o.search_corpus = testing_support::fixtures() / "run1" / "corpus.json";
    return o;
  }

  json get(const std::string& path, int expect = 200) {
    auto res = client.Get(path);
    REQUIRE(res);
    CHECK_MESSAGE(res->status == expect, path, " -> ", res->body);
    return res->get_header_value("Content-Type") == "application/json" ? json::parse(res->body) : json(res->body);
  }

  json post(const std::string& path, const json& body, int expect) {
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    CHECK_MESSAGE(res->status == expect, path, " -> ", res->body);
    return json::parse(res->body);
  }

  /// Polls until the run reaches `phase` (or a terminal one).
  json wait_for(const std::string& id, const std::string& phase) {
    for (int i = 0; i < 400; ++i) {
      json s = get("/runs/" + id)["state"];
      const std::string now = s["phase"];
      if (now == phase || now == "done" || now == "failed") return s;
      std::this_thread::sleep_for(std::chrono::milliseconds(25));
    }
    FAIL("run never reached ", phase);
    return {};
  }

  testing_support::TempDir dir;
  Service service;
  httplib::Client client;
};

/// `data:` payloads of an SSE body.
std::vector<json> sse_events(const std::string& body) {
  std::vector<json> out;
  std::istringstream in(body);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("data: ", 0) == 0) out.push_back(json::parse(line.substr(6)));
  }
  return out;
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("status codes follow error codes") {
    CHECK(http_status_for(ErrorCode::invalid_config) == 400);
    CHECK(http_status_for(ErrorCode::unknown_run) == 404);
    CHECK(http_status_for(ErrorCode::version_conflict) == 409);
    CHECK(http_status_for(ErrorCode::phase_violation) == 409);
    CHECK(http_status_for(ErrorCode::precondition) == 409);
    CHECK(http_status_for(ErrorCode::registration) == 422);
    CHECK(http_status_for(ErrorCode::invalid_rubric) == 422);
    CHECK(http_status_for(ErrorCode::backend_unreachable) == 502);
    CHECK(http_status_for(ErrorCode::timeout) == 504);
    CHECK(http_status_for(ErrorCode::io) == 500);
  }

  TEST_CASE("interactive run over HTTP") {
    Server srv;
    const json auts = srv.get("/auts");
    CHECK(auts.size() >= 4);

    srv.post("/runs", {{"aut_id", "travel-agent"}, {"k_max", 0}}, 400);
    srv.post("/runs", {{"aut_id", "nobody"}}, 422);
    srv.get("/runs/missing", 404);
    srv.get("/runs/missing/events?follow=0", 404);

    const std::string id = srv.post("/runs", {{"aut_id", "travel-agent"}, {"seed", 5}}, 201)["run_id"];
    srv.post("/runs/" + id + "/weaknesses/W1/decision", {{"decision", "approve"}}, 409);
    srv.get("/runs/" + id + "/report", 409);

    std::ifstream in(testing_support::fixtures() / "run1" / "answers.json");
    const auto answers = json::parse(in).get<std::vector<std::string>>();
    json s = srv.wait_for(id, "interviewing");
    REQUIRE(s["phase"] == "interviewing");
    srv.post("/runs/" + id + "/answers", {{"text", "wrong field"}}, 400);
    for (const auto& a : answers) {
      const json ack = srv.post("/runs/" + id + "/answers", {{"answer", a}}, 202);
      CHECK(ack["accepted"] == true);
    }

    s = srv.wait_for(id, "awaiting_approval");
    REQUIRE(s["phase"] == "awaiting_approval");
    srv.post("/runs/" + id + "/answers", {{"answer", "late"}}, 409);
    srv.post("/runs/" + id + "/weaknesses/W99/decision", {{"decision", "approve"}}, 404);
    srv.post("/runs/" + id + "/weaknesses/W1/decision", {{"decision", "maybe"}}, 400);
    for (const auto& w : s["weaknesses"]) {
      const std::string wid = w["weakness_id"];
      const json decision = wid == "W2" ? json{{"decision", "reject"}} : json{{"decision", "approve"}};
      srv.post("/runs/" + id + "/weaknesses/" + wid + "/decision", decision, 202);
    }

    s = srv.wait_for(id, "done");
    REQUIRE(s["phase"] == "done");
    CHECK(s["user_answers"].size() == answers.size());
    CHECK(s["scenarios"].count("W2") == 0);

    const json report = srv.get("/runs/" + id + "/report");
    CHECK(report.contains("overall_score"));
    const json md = srv.get("/runs/" + id + "/report?format=markdown");
    CHECK(md.get<std::string>().rfind("# Test report: travel-agent", 0) == 0);

    const std::string sid = s["scenarios"]["W1"][0]["scenario_id"];
    const json transcript = srv.get("/runs/" + id + "/scenarios/" + sid);
    CHECK(transcript["scenario_id"] == sid);
    srv.get("/runs/" + id + "/scenarios/nope", 404);

    const json qa = srv.post("/runs/" + id + "/qa", {{"question", "Which weakness was lowest?"}}, 200);
    CHECK_FALSE(qa["answer"].get<std::string>().empty());
    srv.post("/runs/" + id + "/qa", json::object(), 400);

    const auto all = sse_events(srv.get("/runs/" + id + "/events?follow=0").get<std::string>());
    REQUIRE(all.size() > 10);
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i]["seq"] == i + 1);
    const auto tail = sse_events(srv.get("/runs/" + id + "/events?follow=0&from=10").get<std::string>());
    REQUIRE_FALSE(tail.empty());
    CHECK(tail.front()["seq"] == 11);
    CHECK(tail.back() == all.back());

    const json runs = srv.get("/runs");
    REQUIRE(runs.size() == 1);
    CHECK(runs[0]["phase"] == "done");
  }

  TEST_CASE("scripted answers and approve_all run unattended") {
    Server srv;
    std::ifstream in(testing_support::fixtures() / "run1" / "answers.json");
    const std::string id = srv.post("/runs",
                                    {{"aut_id", "travel-agent"}, {"approve_all", true},
                                     {"ablate_evidence", true}, {"answers", json::parse(in)}},
                                    201)["run_id"];
    const json s = srv.wait_for(id, "done");
    CHECK(s["phase"] == "done");
    CHECK(s["report"]["skipped_stages"].size() == 2);
  }
}
