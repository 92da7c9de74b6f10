// SPDX-License-Identifier: Apache-2.0
#include "ata/simulation.hpp"

#include "ata/aut_adapter.hpp"
#include "ata/error.hpp"
#include "ata/mock_world.hpp"
#include "ata/state_store.hpp"
#include "ata/test_thread.hpp"

namespace ata {

namespace {

Rubric homing_rubric() {
  Rubric r;
  r.rubric_id = "homing";
  for (const char* name : {"Task success", "Constraint handling", "Communication"}) {
    RubricCriterion c;
    c.name = name;
    for (int s = 1; s <= 5; ++s) c.levels.push_back({"level " + std::to_string(s), double(s), "", double(s)});
    r.criteria.push_back(std::move(c));
  }
  return r;
}

Weakness homing_weakness() {
  Weakness w;
  w.weakness_id = "W1";
  w.name = "Capability boundary";
  w.trigger_conditions = "Requests beyond the agent's competence.";
  w.expected_failure = "Answer quality collapses past the boundary.";
  w.manifestation = "Incomplete or wrong plans.";
  w.example_tests = {{"easy", "A single simple request."},
                     {"medium", "Several interacting requests."},
                     {"hard", "Many conflicting requests revised mid-dialogue."}};
  w.status = WeaknessStatus::approved;
  return w;
}

}  // namespace

HomingResult simulate_homing(const HomingOptions& options) {
  if (options.rounds < 1) throw Error(ErrorCode::invalid_config, "rounds must be >= 1");
  if (!(options.noise >= 0)) throw Error(ErrorCode::invalid_config, "noise must be >= 0");

  LlmGateway gateway;
  gateway.register_backend("mock", std::make_shared<MockBackend>(json::object(), make_reference_responder(options.seed)));
  gateway.route_all("mock");
  const ModelClient model(gateway);

  AutRegistry auts;
  auts.add(make_boundary_mock(options.boundary, options.noise, "boundary"));

  StateStore store;
  RunState initial;
  initial.run_id = "homing";
  initial.phase = Phase::testing;
  initial.weaknesses = {homing_weakness()};
  const std::string run_id = store.create_run(initial);

  const ThreadEnvironment env{&store, run_id, &auts, "boundary", "Scripted agent with a capability boundary.",
                              &model, homing_rubric()};
  const ThreadResult r = run_thread(env, initial.weaknesses.front(),
                                    {options.rounds, options.epsilon, options.params, options.seed});
  if (r.error) throw Error(ErrorCode::io, "homing thread failed: " + *r.error);

  HomingResult out;
  out.seed = options.seed;
  for (const auto& e : r.history.entries()) {
    out.difficulties.push_back(e.difficulty);
    out.scores.push_back(e.score);
  }
  if (r.final_score) out.final_difficulty = *r.final_score;
  out.converged = r.converged;
  return out;
}

void to_json(json& j, const HomingResult& v) {
  j = {{"seed", v.seed},
       {"difficulties", v.difficulties},
       {"scores", v.scores},
       {"final_difficulty", v.final_difficulty},
       {"converged", v.converged}};
}

}  // namespace ata
