// SPDX-License-Identifier: Apache-2.0
//
// Connector to the agent under test. Failures of the agent (crash, empty
// reply, timeout) are reported as turn statuses, never thrown: they are test
// signal.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ata/types.hpp"

namespace ata {

enum class AutTransport { http, subprocess, scripted };

NLOHMANN_JSON_SERIALIZE_ENUM(AutTransport, {
  {AutTransport::http, "http"},
  {AutTransport::subprocess, "subprocess"},
  {AutTransport::scripted, "scripted"},
})

struct AutRegistration {
  std::string aut_id;
  std::string display_name;
  std::string description;
  AutTransport transport = AutTransport::scripted;
  std::string endpoint;              // http
  std::vector<std::string> command;  // subprocess argv
  json behavior;                     // scripted
  std::optional<std::filesystem::path> codebase_path;
  std::optional<Rubric> provided_rubric;
  std::chrono::milliseconds timeout{30000};
};

void to_json(json& j, const AutRegistration& v);
void from_json(const json& j, AutRegistration& v);

struct AutTurnResult {
  std::optional<std::string> reply;
  TurnStatus status = TurnStatus::ok;
  double latency_ms = 0;
};

class AutSession {
 public:
  virtual ~AutSession() = default;
  /// One user message in, one agent turn out. Never blocks much longer than
  /// the registration's timeout.
  virtual AutTurnResult send(const std::string& user_message) = 0;
  virtual const std::string& session_id() const = 0;
};

class AutRegistry {
 public:
  /// Throws registration if the record breaks its transport's invariant
  /// (http needs endpoint, subprocess needs command, scripted needs behavior).
  void add(AutRegistration registration);
  const AutRegistration& get(const std::string& aut_id) const;
  bool contains(const std::string& aut_id) const { return auts_.contains(aut_id); }
  std::vector<std::string> ids() const;

  /// `auts.json`: a list of registration records (or {"auts": [...]}).
  /// Relative codebase and rubric paths resolve against `base_dir`.
  void load(const json& document, const std::filesystem::path& base_dir = {});
  void load_file(const std::filesystem::path& path);

  /// Fresh conversation. `session_key` names the session toward the agent and
  /// seeds scripted randomness together with `seed`. Throws unreachable when
  /// an HTTP agent cannot be contacted.
  std::unique_ptr<AutSession> open_session(const std::string& aut_id,
                                           const std::string& session_key,
                                           std::uint64_t seed = 0) const;

  /// Registry preloaded with the scripted agents shipped with the harness.
  static AutRegistry with_builtins();

 private:
  std::map<std::string, AutRegistration> auts_;
};

/// Scripted agent whose answers degrade once the scenario's difficulty
/// exceeds `boundary`. The mock judge turns its replies into scores of
/// clip(5.5 + 2 (boundary - d) + noise, 1, 10).
AutRegistration make_boundary_mock(double boundary, double noise, std::string aut_id = {});

/// Reply quality of the boundary mock before clipping noise is added.
double boundary_quality(double boundary, double difficulty, double noise_sample);

/// Marker the mock persona embeds in user messages so scripted agents can
/// read the intended difficulty ("challenge level 6.25").
std::string difficulty_marker(double difficulty);
std::optional<double> parse_difficulty_marker(const std::string& text);

/// Marker a boundary mock embeds in replies ("[quality 7.10]").
std::string quality_marker(double quality);
std::optional<double> parse_quality_marker(const std::string& text);

/// Phrase scripted agents use to signal a persona's goal is met.
inline constexpr std::string_view kGoalSatisfiedPhrase = "goal satisfied";

namespace detail {
std::unique_ptr<AutSession> open_http_session(const AutRegistration& reg,
                                              const std::string& session_key);
std::unique_ptr<AutSession> open_subprocess_session(const AutRegistration& reg,
                                                    const std::string& session_key);
}  // namespace detail

}  // namespace ata
