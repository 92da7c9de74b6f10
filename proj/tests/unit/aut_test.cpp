// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <httplib.h>
#include <thread>

#include "ata/aut_adapter.hpp"
#include "ata/error.hpp"
#include "support/helpers.hpp"

using namespace ata;

namespace {

AutRegistration scripted(json behavior, int timeout_ms = 30000) {
  AutRegistration reg;
  reg.aut_id = "s";
  reg.transport = AutTransport::scripted;
  reg.behavior = std::move(behavior);
  reg.timeout = std::chrono::milliseconds(timeout_ms);
  return reg;
}

AutRegistration subprocess(int timeout_ms = 5000) {
  AutRegistration reg;
  reg.aut_id = "p";
  reg.transport = AutTransport::subprocess;
  reg.command = {"python3", (testing_support::source_dir() / "tests/support/line_agent.py").string()};
  reg.timeout = std::chrono::milliseconds(timeout_ms);
  return reg;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ata::Error");
  return ErrorCode::io;
}

}  // namespace

TEST_SUITE("aut") {
  TEST_CASE("scripted injections become turn statuses") {
    AutRegistry registry;
    registry.add(scripted({{"kind", "echo"}, {"null_on_turn", 2}, {"crash_on_turn", 3}}));
    auto session = registry.open_session("s", "k");
    auto first = session->send("hi");
    CHECK(first.status == TurnStatus::ok);
    CHECK(first.reply == "hi");
    CHECK(session->send("again").status == TurnStatus::null_reply);
    auto third = session->send("more");
    CHECK(third.status == TurnStatus::crash);
    CHECK_FALSE(third.reply.has_value());
    CHECK(session->send("after").status == TurnStatus::crash);
  }

  TEST_CASE("scripted timeouts honour the registration budget") {
    AutRegistry registry;
    registry.add(scripted({{"kind", "echo"}, {"delay_ms", 500}}, 50));
    const auto start = std::chrono::steady_clock::now();
    CHECK(registry.open_session("s", "k")->send("hi").status == TurnStatus::timeout);
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::milliseconds(400));
  }

  TEST_CASE("recall, script and goal phrases") {
    AutRegistry registry;
    registry.add(scripted({{"kind", "recall"}, {"goal_on_turn", 2}}));
    auto s = registry.open_session("s", "k");
    s->send("a");
    auto r = s->send("b");
    CHECK(r.reply->starts_with("a | b"));
    CHECK(r.reply->find(kGoalSatisfiedPhrase) != std::string::npos);

    auto builtins = AutRegistry::with_builtins();
    auto travel = builtins.open_session("mock-travel", "k");
    CHECK(travel->send("x").reply->find("Which dates") != std::string::npos);
  }

  TEST_CASE("boundary mock quality follows the difficulty marker") {
    CHECK(parse_difficulty_marker("please, " + difficulty_marker(6.25) + " now") == 6.25);
    CHECK(parse_quality_marker("done " + quality_marker(7.1)) == doctest::Approx(7.1));
    CHECK_FALSE(parse_quality_marker("nothing").has_value());
    CHECK(boundary_quality(6, 6, 0) == 5.5);
    CHECK(boundary_quality(6, 3, 0) == 10);
    CHECK(boundary_quality(6, 9, 0.2) == doctest::Approx(1.0));

    AutRegistry registry;
    registry.add(make_boundary_mock(6, 0, "b"));
    auto easy = registry.open_session("b", "k")->send("Help, " + difficulty_marker(5));
    CHECK(parse_quality_marker(*easy.reply) == doctest::Approx(7.5));
    auto hard = registry.open_session("b", "k")->send("Help, " + difficulty_marker(8));
    CHECK(parse_quality_marker(*hard.reply) == doctest::Approx(1.5));
    CHECK(code_of([] { make_boundary_mock(11, 0); }) == ErrorCode::domain_error);
  }

  TEST_CASE("boundary noise is reproducible per session key and seed") {
    AutRegistry registry;
    registry.add(make_boundary_mock(6, 1.0, "b"));
    auto quality = [&](const std::string& key, std::uint64_t seed) {
      return *parse_quality_marker(*registry.open_session("b", key, seed)->send(difficulty_marker(6)).reply);
    };
    CHECK(quality("W1-s1", 7) == quality("W1-s1", 7));
    bool varies = false;
    for (int i = 2; i < 10 && !varies; ++i) varies = quality("W1-s" + std::to_string(i), 7) != quality("W1-s1", 7);
    CHECK(varies);
  }

  TEST_CASE("registration invariants") {
    AutRegistry registry;
    AutRegistration http;
    http.aut_id = "h";
    http.transport = AutTransport::http;
    CHECK(code_of([&] { registry.add(http); }) == ErrorCode::registration);
    AutRegistration proc;
    proc.aut_id = "p";
    proc.transport = AutTransport::subprocess;
    CHECK(code_of([&] { registry.add(proc); }) == ErrorCode::registration);
    CHECK(code_of([&] { registry.add(scripted(nullptr)); }) == ErrorCode::registration);
    CHECK(code_of([&] { registry.get("missing"); }) == ErrorCode::registration);
    CHECK(code_of([&] { registry.load(json{{"auts", {{{"aut_id", "x"}, {"transport", "smoke"}}}}}); }) ==
          ErrorCode::registration);
  }

  TEST_CASE("the shipped registry resolves codebases and rubrics") {
    AutRegistry registry;
    registry.load_file(testing_support::fixtures() / "auts.json");
    const auto& travel = registry.get("travel-agent");
    REQUIRE(travel.codebase_path.has_value());
    CHECK(std::filesystem::is_directory(*travel.codebase_path));
    REQUIRE(travel.provided_rubric.has_value());
    CHECK(travel.provided_rubric->criteria.size() == 3);
    CHECK(registry.get("wiki-writer").provided_rubric->criteria.size() == 4);
    const json round = travel;
    CHECK(round.get<AutRegistration>().provided_rubric->criteria.size() == 3);
  }

  TEST_CASE("subprocess agents speak the line protocol") {
    AutRegistry registry;
    registry.add(subprocess());
    auto session = registry.open_session("p", "W1-s1");
    auto r = session->send("hello");
    CHECK(r.status == TurnStatus::ok);
    CHECK(r.reply == "echo: hello");
    CHECK(session->send("empty").status == TurnStatus::null_reply);
    CHECK(session->send("crash").status == TurnStatus::crash);
    CHECK(session->send("after").status == TurnStatus::crash);
  }

  TEST_CASE("a hung subprocess times out") {
    AutRegistry registry;
    registry.add(subprocess(300));
    auto session = registry.open_session("p", "k");
    CHECK(session->send("hang").status == TurnStatus::timeout);
  }

  TEST_CASE("http agents") {
    httplib::Server server;
    server.Get("/chat", [](const httplib::Request&, httplib::Response& res) { res.status = 405; });
    server.Post("/chat", [](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      const std::string msg = body["message"];
      if (msg == "boom") {
        res.status = 500;
      } else if (msg == "quiet") {
        res.set_content(R"({"reply": ""})", "application/json");
      } else if (msg == "slow") {
        std::this_thread::sleep_for(std::chrono::milliseconds(800));
        res.set_content(R"({"reply": "late"})", "application/json");
      } else {
        res.set_content(json{{"reply", body["session_id"].get<std::string>() + ":" + msg}}.dump(),
                        "application/json");
      }
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    AutRegistration reg;
    reg.aut_id = "h";
    reg.transport = AutTransport::http;
    reg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/chat";
    reg.timeout = std::chrono::milliseconds(300);
    AutRegistry registry;
    registry.add(reg);
    auto session = registry.open_session("h", "W2-s1");
    CHECK(session->send("hi").reply == "W2-s1:hi");
    CHECK(session->send("boom").status == TurnStatus::crash);
    CHECK(session->send("quiet").status == TurnStatus::null_reply);
    CHECK(session->send("slow").status == TurnStatus::timeout);
    server.stop();
    t.join();

    reg.aut_id = "gone";
    reg.endpoint = "http://127.0.0.1:1/chat";
    registry.add(reg);
    CHECK(code_of([&] { registry.open_session("gone", "k"); }) == ErrorCode::unreachable);
  }
}
