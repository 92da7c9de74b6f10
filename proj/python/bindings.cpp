// SPDX-License-Identifier: Apache-2.0
//
// Thin binding over the C++ core. Structured values cross as JSON text; the
// Python package converts them to dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ata/error.hpp"
#include "ata/judge.hpp"
#include "ata/pipeline.hpp"
#include "ata/planner.hpp"
#include "ata/reporter.hpp"
#include "ata/service.hpp"
#include "ata/simulation.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace ata;

namespace {

DifficultyHistory to_history(const std::vector<std::pair<double, double>>& pairs, double eta) {
  DifficultyParams params;
  params.eta = eta;
  DifficultyHistory h(params);
  for (const auto& [d, s] : pairs) h.append(d, s);
  return h;
}

std::string graph_checks(const std::string& graph_json) {
  const AgentGraph graph = json::parse(graph_json).get<AgentGraph>();
  const auto unreachable = unreachable_nodes(graph);
  return json{{"unreachable_nodes", std::vector<std::string>(unreachable.begin(), unreachable.end())},
              {"missing_fallbacks", missing_fallbacks(graph)},
              {"findings", structural_findings(graph)}}
      .dump();
}

/// Full run with mock or configured backends and scripted inputs. Returns the
/// run id; the state is persisted under `runs_dir`.
std::string run_pipeline(const std::string& config_json, const fs::path& runs_dir,
                         const std::optional<fs::path>& mock_llm, const std::optional<fs::path>& backend_config,
                         const std::optional<fs::path>& auts_file, const std::vector<std::string>& answers,
                         const std::optional<fs::path>& search_corpus, const std::string& run_id) {
  const RunConfig config = json::parse(config_json).get<RunConfig>();
  const AutRegistry registry = make_registry(auts_file);
  auto gateway = make_gateway({backend_config, mock_llm}, config.seed);
  auto search = make_search(search_corpus, std::nullopt);
  fs::create_directories(runs_dir);
  StateStore store(StoreOptions{runs_dir, {}});
  Engine engine({&store, &registry, gateway.get(), search.get()});
  const std::string id = engine.create(config, run_id);
  ScriptedAnswers scripted(answers);
  ScriptedApprovals approve_all;
  py::gil_scoped_release release;
  engine.execute(id, config, {&scripted, &approve_all});
  return id;
}

std::string load_state(const fs::path& runs_dir, const std::string& run_id) {
  StateStore store(StoreOptions{runs_dir, {}});
  store.open_run(run_id);
  return json(store.snapshot(run_id)).dump();
}

std::vector<std::string> verify_stored_report(const fs::path& runs_dir, const std::string& run_id) {
  StateStore store(StoreOptions{runs_dir, {}});
  store.open_run(run_id);
  const RunState state = store.snapshot(run_id);
  if (!state.report) return {"run has no report"};
  return verify_report(*state.report, read_file(store.run_dir(run_id) / "report.md"), state);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adversarial testing harness core";

  static py::exception<Error> error_type(m, "AtaError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      exc.attr("details") = e.details().dump();
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.attr("INITIAL_DIFFICULTY") = kInitialDifficulty;
  m.attr("DEFAULT_EPSILON") = kDefaultEpsilon;

  m.def("step", [](double d, double s, double eta) {
    DifficultyParams p;
    p.eta = eta;
    return step(d, s, p);
  }, py::arg("d"), py::arg("s"), py::arg("eta") = 3.0, "Next difficulty proposed by one (d, s) pair.");
  m.def("weight", [](double s) { return weight(s); }, py::arg("s"));
  m.def("posterior", [](const std::vector<std::pair<double, double>>& h, double eta) {
    return posterior(to_history(h, eta));
  }, py::arg("history"), py::arg("eta") = 3.0);
  m.def("converged", [](const std::vector<std::pair<double, double>>& h, double epsilon, double eta) {
    return converged(to_history(h, eta), epsilon);
  }, py::arg("history"), py::arg("epsilon") = kDefaultEpsilon, py::arg("eta") = 3.0);
  m.def("band", [](double d) { return std::string(to_string(band_of(d).name)); }, py::arg("d"));
  m.def("turn_limit", &turn_limit_for, py::arg("d"));
  m.def("aggregate", [](const std::vector<double>& scores, const std::vector<double>& weights) {
    return aggregate(scores, weights);
  }, py::arg("scores"), py::arg("weights") = std::vector<double>{});

  m.def("_graph_checks", &graph_checks);
  m.def("_simulate_homing", [](double boundary, double noise, int rounds, double epsilon, std::uint64_t seed) {
    HomingOptions o;
    o.boundary = boundary;
    o.noise = noise;
    o.rounds = rounds;
    o.epsilon = epsilon;
    o.seed = seed;
    return json(simulate_homing(o)).dump();
  });
  m.def("_run", &run_pipeline);
  m.def("_load_state", &load_state);
  m.def("verify_report", &verify_stored_report, py::arg("runs_dir"), py::arg("run_id"),
        "Discrepancies between a stored report and its run state; empty when every number recomputes.");
}
