// SPDX-License-Identifier: Apache-2.0
//
// Offline subcommands of `ata`: arithmetic, graph analysis, homing
// simulation and report verification. Each returns a process exit code.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace ata::cli {

/// JSON lines in, JSON lines out. Requests:
///   {"op": "step", "d": .., "s": ..}       {"op": "weight", "s": ..}
///   {"op": "posterior", "history": [[d, s], ..]}
///   {"op": "converged", "history": [[d, s], ..], "epsilon": ..}
///   {"op": "aggregate", "scores": [..], "weights": [..]}
///   {"op": "band", "d": ..}                {"op": "turn_limit", "d": ..}
/// "eta" is accepted wherever the step size matters. A bad line yields
/// {"error": code, "message": ..} and exit code 1 at the end.
int calc(std::istream& in, std::ostream& out);

struct AnalyzeOptions {
  std::optional<std::filesystem::path> codebase;
  std::optional<std::filesystem::path> graph;  // "-" reads stdin
  std::optional<std::filesystem::path> mock_llm;
  std::optional<std::filesystem::path> backend_config;
  std::uint64_t seed = 0;
};

/// Code analysis of a directory, or the structural checks of a graph file.
int analyze(const AnalyzeOptions& options, std::istream& in, std::ostream& out);

struct SimulateOptions {
  double boundary = 5.5;
  double noise = 0.5;
  int rounds = 3;
  double epsilon = 0.25;
  double eta = 3.0;
  int runs = 1;
  std::uint64_t first_seed = 1;
};

/// One JSON line per seeded run.
int simulate(const SimulateOptions& options, std::ostream& out);

/// Recomputes every number in report.json and report.md of a stored run.
int verify(const std::filesystem::path& runs_dir, const std::string& run_id, std::ostream& out);

}  // namespace ata::cli
