// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <httplib.h>
#include <thread>

#include "ata/error.hpp"
#include "ata/llm_gateway.hpp"
#include "ata/schema.hpp"
#include "ata/types.hpp"
#include "support/helpers.hpp"

using namespace ata;

namespace {

const json kPointSchema = json::parse(R"({
  "type": "object",
  "required": ["x", "label"],
  "additionalProperties": false,
  "properties": {
    "x": {"type": "number", "minimum": 1, "maximum": 5},
    "label": {"type": "string", "minLength": 1},
    "tags": {"type": "array", "items": {"type": "string", "enum": ["a", "b"]}, "maxItems": 2}
  }
})");

std::vector<ChatMessage> prompt(const std::string& user) {
  return {{"system", "You are terse. " + task_tag("probe")}, {"user", user}};
}

std::unique_ptr<LlmGateway> scripted(json script) {
  auto g = std::make_unique<LlmGateway>();
  g->register_backend({{"name", "m"}, {"transport", "mock"}, {"script", std::move(script)}});
  g->route_all("m");
  return g;
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

/// Local chat-completions endpoint that answers with canned bodies.
class FakeChatServer {
 public:
  explicit FakeChatServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeChatServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_SUITE("gateway") {
  TEST_CASE("schema validator reports each violation with a pointer") {
    CHECK(schema::validate(json{{"x", 3}, {"label", "ok"}}, kPointSchema).empty());
    const auto errors = schema::validate(json{{"x", 9}, {"tags", {"c", "a", "b"}}, {"extra", 1}}, kPointSchema);
    CHECK(errors.size() >= 4);
    std::string all;
    for (const auto& e : errors) all += e + "\n";
    CHECK(all.find("/x") != std::string::npos);
    CHECK(all.find("label") != std::string::npos);
    CHECK(all.find("/tags") != std::string::npos);
    CHECK(all.find("extra") != std::string::npos);
  }

  TEST_CASE("json extraction tolerates fences and prose") {
    CHECK(schema::extract_json("```json\n{\"x\": 2}\n```")["x"] == 2);
    CHECK(schema::extract_json("Sure! {\"x\": {\"y\": \"}\"}} done")["x"]["y"] == "}");
    CHECK(schema::extract_json("no json here").is_discarded());
  }

  TEST_CASE("prompt helpers round trip task and context") {
    const auto messages = std::vector<ChatMessage>{
        {"system", "base " + task_tag("first")},
        {"user", with_context("Do it.", {{"k", 1}})},
        {"system", task_tag("second")}};
    CHECK(find_task(messages) == "second");
    CHECK(find_context(messages)->at("k") == 1);
    CHECK_FALSE(find_task({{"system", "plain"}}).has_value());
  }

  TEST_CASE("mock replies are keyed by role and user message and consumed in order") {
    auto g = scripted({{"entries",
                        {{{"role", "planner_deep"}, {"user_message", "hello"}, {"replies", {"one", "two"}}},
                         {{"user_message", "hello"}, {"reply", "any role"}}}},
                       {"defaults", {{"judge_deep", "judge default"}}},
                       {"default", "global"}});
    CHECK(g->complete(ModelRole::planner_deep, prompt("hello")).content == "one");
    CHECK(g->complete(ModelRole::planner_deep, prompt("hello")).content == "two");
    CHECK(g->complete(ModelRole::planner_deep, prompt("hello")).content == "two");
    CHECK(g->complete(ModelRole::dialogue_light, prompt("hello")).content == "any role");
    CHECK(g->complete(ModelRole::judge_deep, prompt("other")).content == "judge default");
    CHECK(g->complete(ModelRole::report_light, prompt("other")).content == "global");
  }

  TEST_CASE("invalid structured replies are repaired within the budget") {
    auto g = scripted({{"entries", {{{"user_message", "point"},
                                     {"replies", {"not json", R"({"x": 7, "label": "p"})", R"({"x": 4, "label": "p"})"}}}}}});
    std::vector<json> calls;
    auto ex = g->complete(ModelRole::analysis_light, prompt("point"), &kPointSchema,
                          [&](const json& r) { calls.push_back(r); });
    CHECK(ex.parsed->at("x") == 4);
    CHECK(ex.usage.calls == 3);
    CHECK(ex.raw_replies.size() == 3);
    CHECK(calls.size() == 3);
    // The repair instruction and the rejected replies stay in the transcript.
    int repairs = 0;
    for (const auto& m : ex.messages) repairs += m.content.starts_with(kRepairPrefix);
    CHECK(repairs == 2);
    CHECK(ex.messages.back().content == R"({"x": 4, "label": "p"})");
  }

  TEST_CASE("an exhausted repair loop surfaces every raw reply") {
    auto g = scripted({{"default", "still not json"}});
    try {
      g->complete(ModelRole::analysis_light, prompt("point"), &kPointSchema);
      FAIL("expected schema_violation_exhausted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::schema_violation_exhausted);
      CHECK(e.details()["raw_replies"].size() == 4);  // first attempt + retry budget of 3
    }
  }

  TEST_CASE("gateway configuration is validated") {
    LlmGateway g;
    CHECK(code_of([&] { g.configure_role(ModelRole::judge_deep, {.backend = "missing"}); }) ==
          ErrorCode::invalid_config);
    CHECK(code_of([&] { g.validate(); }) == ErrorCode::invalid_config);
    CHECK(code_of([&] { g.register_backend(json{{"name", "x"}, {"transport", "carrier-pigeon"}}); }) ==
          ErrorCode::invalid_config);
    CHECK(code_of([&] { g.register_backend(json{{"name", "h"}, {"transport", "http"}, {"model", "m"}}); }) ==
          ErrorCode::invalid_config);

    LlmGateway split;
    load_gateway_config(split, {{"backends", {{{"name", "a"}, {"transport", "mock"}},
                                              {{"name", "b"}, {"transport", "mock"}}}},
                                {"roles", {{"default", {{"backend", "a"}, {"retry_budget", 1}}},
                                           {"judge_deep", {{"backend", "b"}, {"temperature", 0.1}}}}}});
    CHECK(split.role_settings(ModelRole::judge_deep).temperature == 0.1);
    CHECK(split.role_settings(ModelRole::planner_deep).retry_budget == 1);
    CHECK(code_of([&] { split.validate(); }) == ErrorCode::invalid_config);

    auto ok = testing_support::mock_gateway();
    CHECK_NOTHROW(ok->validate());
    CHECK(code_of([&] { ok->complete(ModelRole::judge_deep, {{"user", "no system prompt"}}); }) ==
          ErrorCode::invalid_config);
  }

  TEST_CASE("http backend speaks chat completions and reads the key from the environment") {
    json seen;
    std::string auth;
    FakeChatServer server([&](const httplib::Request& req, httplib::Response& res) {
      seen = json::parse(req.body);
      auth = req.get_header_value("Authorization");
      res.set_content(json{{"choices", {{{"message", {{"content", R"({"x": 2, "label": "h"})"}}},
                                          {"finish_reason", "stop"}}}},
                           {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 5}}}}
                          .dump(),
                      "application/json");
    });
    ::setenv("ATA_TEST_CHAT_KEY", "sekrit", 1);
    LlmGateway g;
    g.register_backend({{"name", "h"}, {"transport", "http"}, {"endpoint", server.url()},
                        {"model", "small"}, {"api_key_env", "ATA_TEST_CHAT_KEY"}});
    g.route_all("h");
    auto ex = g.complete(ModelRole::analysis_light, prompt("point"), &kPointSchema);
    CHECK(ex.parsed->at("label") == "h");
    CHECK(ex.usage.prompt_tokens == 11);
    CHECK(seen["model"] == "small");
    CHECK(seen["temperature"] == 0.2);
    CHECK(seen["response_format"]["type"] == "json_object");
    CHECK(auth == "Bearer sekrit");
    ::unsetenv("ATA_TEST_CHAT_KEY");
  }

  TEST_CASE("server errors are retried and then reported as unreachable") {
    int hits = 0;
    FakeChatServer server([&](const httplib::Request&, httplib::Response& res) {
      ++hits;
      res.status = 503;
    });
    LlmGateway g;
    g.register_backend({{"name", "h"}, {"transport", "http"}, {"endpoint", server.url()}, {"model", "m"}});
    RoleSettings s = default_role_settings(ModelRole::dialogue_light);
    s.backend = "h";
    s.retry_budget = 1;
    g.configure_role(ModelRole::dialogue_light, s);
    CHECK(code_of([&] { g.complete(ModelRole::dialogue_light, prompt("hi")); }) == ErrorCode::backend_unreachable);
    CHECK(hits == 2);
  }

  TEST_CASE("a closed port is unreachable") {
    LlmGateway g;
    g.register_backend({{"name", "h"}, {"transport", "http"}, {"endpoint", "http://127.0.0.1:1/v1/chat"}, {"model", "m"}});
    RoleSettings s = default_role_settings(ModelRole::dialogue_light);
    s.backend = "h";
    s.retry_budget = 0;
    g.configure_role(ModelRole::dialogue_light, s);
    CHECK(code_of([&] { g.complete(ModelRole::dialogue_light, prompt("hi")); }) == ErrorCode::backend_unreachable);
  }

  TEST_CASE("per-role concurrency cap is respected") {
    std::atomic<int> inflight{0}, peak{0};
    auto backend = std::make_shared<MockBackend>(json::object(), [&](const BackendRequest&) -> std::optional<std::string> {
      const int now = ++inflight;
      int prev = peak.load();
      while (now > prev && !peak.compare_exchange_weak(prev, now)) {}
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --inflight;
      return "ok";
    });
    LlmGateway g;
    g.register_backend("m", backend);
    RoleSettings s = default_role_settings(ModelRole::dialogue_light);
    s.backend = "m";
    s.max_concurrency = 2;
    g.configure_role(ModelRole::dialogue_light, s);
    std::vector<std::thread> workers;
    for (int i = 0; i < 6; ++i) {
      workers.emplace_back([&] { g.complete(ModelRole::dialogue_light, prompt("hi")); });
    }
    for (auto& w : workers) w.join();
    CHECK(peak.load() <= 2);
    CHECK(backend->calls() == 6);
  }
}
