// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <iostream>

#include "ata/error.hpp"
#include "ata/judge.hpp"
#include "ata/planner.hpp"
#include "ata/reporter.hpp"
#include "ata/service.hpp"
#include "ata/simulation.hpp"

namespace fs = std::filesystem;

namespace ata::cli {

namespace {

DifficultyHistory history_from(const json& request, const DifficultyParams& params) {
  DifficultyHistory h(params);
  for (const auto& pair : request.at("history")) h.append(pair.at(0).get<double>(), pair.at(1).get<double>());
  return h;
}

json evaluate(const json& request) {
  DifficultyParams params;
  params.eta = request.value("eta", params.eta);
  const std::string op = request.at("op").get<std::string>();
  if (op == "step") return step(request.at("d").get<double>(), request.at("s").get<double>(), params);
  if (op == "weight") return weight(request.at("s").get<double>(), params);
  if (op == "posterior") return posterior(history_from(request, params));
  if (op == "converged") {
    return converged(history_from(request, params), request.value("epsilon", kDefaultEpsilon));
  }
  if (op == "aggregate") {
    return aggregate(request.at("scores").get<std::vector<double>>(),
                     request.value("weights", std::vector<double>{}));
  }
  if (op == "band") return to_string(band_of(request.at("d").get<double>()).name);
  if (op == "turn_limit") return turn_limit_for(request.at("d").get<double>());
  throw Error(ErrorCode::invalid_config, "unknown op '" + op + "'");
}

}  // namespace

int calc(std::istream& in, std::ostream& out) {
  int status = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json reply;
    try {
      reply = {{"value", evaluate(json::parse(line))}};
    } catch (const Error& e) {
      reply = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
      status = 1;
    } catch (const json::exception& e) {
      reply = {{"error", "invalid-config"}, {"message", e.what()}};
      status = 1;
    }
    out << reply.dump() << "\n";
  }
  return status;
}

int analyze(const AnalyzeOptions& options, std::istream& in, std::ostream& out) {
  if (options.graph) {
    const json doc = *options.graph == "-" ? json::parse(in) : json::parse(read_file(*options.graph));
    const AgentGraph graph = doc.get<AgentGraph>();
    const auto unreachable = unreachable_nodes(graph);
    out << json{{"unreachable_nodes", std::vector<std::string>(unreachable.begin(), unreachable.end())},
                {"missing_fallbacks", missing_fallbacks(graph)},
                {"findings", structural_findings(graph)}}
               .dump()
        << "\n";
    return 0;
  }
  if (!options.codebase) throw Error(ErrorCode::invalid_config, "give --codebase or --graph");
  const auto gateway = make_gateway({options.backend_config, options.mock_llm}, options.seed);
  const ModelClient model(*gateway);
  out << json(analyze_codebase(*options.codebase, model)).dump(2) << "\n";
  return 0;
}

int simulate(const SimulateOptions& options, std::ostream& out) {
  if (options.runs < 1) throw Error(ErrorCode::invalid_config, "runs must be >= 1");
  for (int i = 0; i < options.runs; ++i) {
    HomingOptions h;
    h.boundary = options.boundary;
    h.noise = options.noise;
    h.rounds = options.rounds;
    h.epsilon = options.epsilon;
    h.params.eta = options.eta;
    h.seed = options.first_seed + static_cast<std::uint64_t>(i);
    json line = simulate_homing(h);
    line["boundary"] = options.boundary;
    out << line.dump() << "\n";
  }
  return 0;
}

int verify(const fs::path& runs_dir, const std::string& run_id, std::ostream& out) {
  StateStore store(StoreOptions{runs_dir, {}});
  store.open_run(run_id);
  const RunState state = store.snapshot(run_id);
  const fs::path dir = store.run_dir(run_id);
  std::vector<std::string> problems;
  if (!fs::exists(dir / "report.json") || !fs::exists(dir / "report.md")) {
    problems.push_back("report.json or report.md missing");
  } else {
    const Report report = json::parse(read_file(dir / "report.json")).get<Report>();
    if (!state.report || !(json(*state.report) == json(report))) problems.push_back("report.json differs from state");
    for (auto& p : verify_report(report, read_file(dir / "report.md"), state)) problems.push_back(std::move(p));
  }
  for (const auto& p : problems) out << "FAIL " << p << "\n";
  if (problems.empty()) out << "OK every report number recomputes from state\n";
  return problems.empty() ? 0 : 1;
}

}  // namespace ata::cli
