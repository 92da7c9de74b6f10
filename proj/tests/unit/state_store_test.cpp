// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "ata/error.hpp"
#include "ata/state_store.hpp"
#include "support/helpers.hpp"

using namespace ata;
using testing_support::TempDir;

namespace {

RunState fresh(const std::string& id = "run-a") {
  RunState s;
  s.run_id = id;
  s.aut_ref = "travel-agent";
  return s;
}

TestScenario scenario(const std::string& wid, int index) {
  TestScenario sc;
  sc.scenario_id = wid + "-s" + std::to_string(index);
  sc.weakness_id = wid;
  sc.index = index;
  return sc;
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

TEST_SUITE("state_store") {
  TEST_CASE("commit bumps the version and rejects stale bases") {
    StateStore store;
    const auto id = store.create_run(fresh());
    CHECK(store.snapshot_versioned(id).version == 0);
    CHECK(store.commit(id, 0, [](RunState& s) { s.testing_focus = "dates"; }, "t") == 1);
    CHECK(code_of([&] { store.commit(id, 0, [](RunState& s) { s.testing_focus = "x"; }, "t"); }) ==
          ErrorCode::version_conflict);
    CHECK(store.snapshot(id).testing_focus == "dates");
    CHECK(code_of([&] { store.snapshot("nope"); }) == ErrorCode::unknown_run);
  }

  TEST_CASE("phase may only move forward or to failed") {
    StateStore store;
    const auto id = store.create_run(fresh());
    store.commit(id, 0, [](RunState& s) { s.phase = Phase::testing; }, "t");
    CHECK(code_of([&] { store.commit(id, 1, [](RunState& s) { s.phase = Phase::analyzing; }, "t"); }) ==
          ErrorCode::phase_violation);
    CHECK(store.commit(id, 1, [](RunState& s) { s.phase = Phase::failed; }, "t") == 2);
    CHECK(code_of([&] { store.commit(id, 2, [](RunState& s) { s.phase = Phase::done; }, "t"); }) ==
          ErrorCode::phase_violation);
  }

  TEST_CASE("document invariants") {
    StateStore store;
    const auto id = store.create_run(fresh());
    CHECK(code_of([&] { store.commit(id, 0, [](RunState& s) { s.run_id = "other"; }, "t"); }) ==
          ErrorCode::invariant_violation);
    CHECK(code_of([&] {
            store.commit(id, 0, [](RunState& s) {
              s.weaknesses = {testing_support::sample_weakness("W1"), testing_support::sample_weakness("W1")};
            }, "t");
          }) == ErrorCode::invariant_violation);
    CHECK(code_of([&] {
            store.commit(id, 0, [](RunState& s) { s.scenarios["W9"].push_back(scenario("W9", 1)); }, "t");
          }) == ErrorCode::invariant_violation);

    store.commit(id, 0, [](RunState& s) {
      s.weaknesses = {testing_support::sample_weakness("W1")};
      auto sc = scenario("W1", 1);
      sc.outcome = Outcome::completed;
      sc.judge_result = JudgeResult{{{"a", {4, "fine"}}}, 7.75, {}};
      s.scenarios["W1"].push_back(sc);
    }, "t");
    CHECK(code_of([&] { store.commit(id, 1, [](RunState& s) { s.scenarios["W1"].clear(); }, "t"); }) ==
          ErrorCode::invariant_violation);
    CHECK(code_of([&] {
            store.commit(id, 1, [](RunState& s) { s.scenarios["W1"][0].judge_result->overall = 2; }, "t");
          }) == ErrorCode::already_judged);
    CHECK(code_of([&] {
            store.commit(id, 1, [](RunState& s) { s.scenarios["W1"][0].judge_result.reset(); }, "t");
          }) == ErrorCode::already_judged);
    CHECK(store.snapshot_versioned(id).version == 1);
  }

  TEST_CASE("replaying the event log reproduces the state") {
    StateStore store;
    const auto id = store.create_run(fresh());
    store.update(id, [](RunState& s) { s.user_answers.push_back({"q", "a"}); }, "t");
    store.update(id, [](RunState& s) { s.weaknesses.push_back(testing_support::sample_weakness()); }, "t");
    store.update(id, [](RunState& s) { s.phase = Phase::testing; s.scenarios["W1"].push_back(scenario("W1", 1)); }, "t");
    store.append_event(id, "t", EventKind::user_input, {{"kind", "qa"}});
    CHECK(canonical_dump(StateStore::replay(store.events(id))) == canonical_dump(store.snapshot(id)));
    CHECK(code_of([&] { store.append_event(id, "t", EventKind::state_commit, {}); }) ==
          ErrorCode::invariant_violation);
  }

  TEST_CASE("commit patches rebuild the document even for awkward ids") {
    StateStore store;
    const auto id = store.create_run(fresh());
    const std::string odd = "W/1~x";
    store.update(id, [&](RunState& s) { s.weaknesses = {testing_support::sample_weakness(odd)}; }, "t");
    store.update(id, [&](RunState& s) { s.scenarios[odd].push_back(scenario(odd, 1)); }, "t");
    store.update(id, [&](RunState& s) {
      s.scenarios[odd][0].outcome = Outcome::completed;
      s.scenarios[odd].push_back(scenario(odd, 2));
      s.rubric = testing_support::sample_rubric(1);
    }, "t");
    store.update(id, [&](RunState& s) { s.rubric.reset(); s.failure = "x"; s.phase = Phase::failed; }, "t");
    CHECK(canonical_dump(StateStore::replay(store.events(id))) == canonical_dump(store.snapshot(id)));
    const auto events = store.events(id);
    CHECK(events.back().payload["patch"].size() == 3);
  }

  TEST_CASE("concurrent updates never lose a write") {
    StateStore store;
    const auto id = store.create_run(fresh());
    std::vector<std::thread> workers;
    for (int t = 0; t < 8; ++t) {
      workers.emplace_back([&, t] {
        for (int i = 0; i < 25; ++i) {
          store.update(id, [&](RunState& s) {
            s.user_answers.push_back({std::to_string(t), std::to_string(i)});
          }, "w" + std::to_string(t), 10000);
        }
      });
    }
    for (auto& w : workers) w.join();
    const auto v = store.snapshot_versioned(id);
    CHECK(v.version == 200);
    CHECK(v.state->user_answers.size() == 200);
    CHECK(canonical_dump(StateStore::replay(store.events(id))) == canonical_dump(*v.state));
  }

  TEST_CASE("persistent runs reopen at the same version") {
    TempDir dir;
    std::string id;
    {
      StateStore store(StoreOptions{.root = dir.path()});
      id = store.create_run(fresh());
      store.update(id, [](RunState& s) { s.testing_focus = "budget"; }, "t");
      store.write_transcript(id, "W1-s1", {{"turns", json::array()}});
    }
    CHECK(std::filesystem::exists(dir.path() / id / "transcripts" / "W1-s1.json"));
    StateStore reopened(StoreOptions{.root = dir.path()});
    CHECK(reopened.open_run(id) == 1);
    CHECK(reopened.snapshot(id).testing_focus == "budget");
    CHECK(reopened.update(id, [](RunState& s) { s.testing_focus = "dates"; }, "t") == 2);
  }

  TEST_CASE("a torn final log line is dropped on reopen") {
    TempDir dir;
    std::string id;
    {
      StateStore store(StoreOptions{.root = dir.path()});
      id = store.create_run(fresh());
      store.update(id, [](RunState& s) { s.testing_focus = "one"; }, "t");
    }
    {
      std::ofstream log(dir.path() / id / "events.ndjson", std::ios::app);
      log << R"({"seq":3,"kind":"state_com)";
    }
    StateStore reopened(StoreOptions{.root = dir.path()});
    CHECK(reopened.open_run(id) == 1);
    CHECK(reopened.events(id).size() == 2);
    CHECK(reopened.update(id, [](RunState& s) { s.testing_focus = "two"; }, "t") == 2);
    StateStore again(StoreOptions{.root = dir.path()});
    CHECK(again.open_run(id) == 2);
    CHECK(again.snapshot(id).testing_focus == "two");
  }

  TEST_CASE("a kill between log append and state write is recovered from the log") {
    TempDir dir;
    std::string id;
    {
      bool armed = false;
      StateStore store({.root = dir.path(), .fault_injector = [&](std::string_view stage) {
                          if (armed && stage == "after_event_append") throw std::runtime_error("killed");
                        }});
      id = store.create_run(fresh());
      store.update(id, [](RunState& s) { s.testing_focus = "before"; }, "t");
      armed = true;
      CHECK_THROWS(store.update(id, [](RunState& s) { s.testing_focus = "after"; }, "t"));
    }
    const json on_disk = json::parse(read_file(dir.path() / id / "state.json"));
    CHECK(on_disk["version"] == 1);
    StateStore reopened(StoreOptions{.root = dir.path()});
    CHECK(reopened.open_run(id) == 2);
    CHECK(reopened.snapshot(id).testing_focus == "after");
  }

  TEST_CASE("subscriptions replay history and then follow") {
    StateStore store;
    const auto id = store.create_run(fresh());
    store.append_event(id, "t", EventKind::user_input, {{"n", 1}});
    auto sub = store.subscribe(id, 0);
    auto backlog = sub->drain();
    REQUIRE(backlog.size() == 2);
    CHECK(backlog[0].seq == 1);
    CHECK(backlog[1].payload["n"] == 1);
    CHECK_FALSE(sub->next(std::chrono::milliseconds(10)).has_value());

    std::thread producer([&] {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      store.append_event(id, "t", EventKind::user_input, {{"n", 2}});
    });
    auto ev = sub->next(std::chrono::seconds(5));
    producer.join();
    REQUIRE(ev.has_value());
    CHECK(ev->seq == 3);

    auto late = store.subscribe(id, 2);
    CHECK(late->drain().size() == 1);
    late->close();
    CHECK(late->closed());
    CHECK_FALSE(late->next(std::chrono::milliseconds(1)).has_value());
  }

  TEST_CASE("run ids are unique and listed") {
    StateStore store;
    const auto a = store.create_run(fresh(""));
    const auto b = store.create_run(fresh(""));
    CHECK(a != b);
    CHECK(store.run_ids().size() == 2);
    CHECK(code_of([&] { store.create_run(fresh(a)); }) == ErrorCode::invalid_config);
  }
}
