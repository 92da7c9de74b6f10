// SPDX-License-Identifier: Apache-2.0
//
// Versioned run state plus an append-only event log.
//
// Every commit is expressed as a JSON Patch against the previous canonical
// state and recorded as a `state_commit` event before the state document is
// replaced, so replaying the log from nothing reproduces the current state.
// On disk a run lives under `<root>/<run_id>/`:
//
//   state.json            {"version": N, "state": {...}}
//   events.ndjson         one EventRecord per line
//   transcripts/<id>.json one file per executed scenario
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "ata/types.hpp"

namespace ata {

enum class EventKind {
  state_commit,
  dialogue_turn,
  judge_result,
  difficulty_update,
  error,
  user_input,
  model_call,
};

NLOHMANN_JSON_SERIALIZE_ENUM(EventKind, {
  {EventKind::state_commit, "state_commit"},
  {EventKind::dialogue_turn, "dialogue_turn"},
  {EventKind::judge_result, "judge_result"},
  {EventKind::difficulty_update, "difficulty_update"},
  {EventKind::error, "error"},
  {EventKind::user_input, "user_input"},
  {EventKind::model_call, "model_call"},
})

struct EventRecord {
  std::uint64_t seq = 0;
  std::int64_t timestamp_ms = 0;
  std::string actor;
  EventKind kind = EventKind::state_commit;
  json payload;
};

void to_json(json& j, const EventRecord& v);
void from_json(const json& j, EventRecord& v);

using Mutation = std::function<void(RunState&)>;

struct VersionedState {
  std::uint64_t version = 0;
  std::shared_ptr<const RunState> state;
};

namespace detail {
struct RunRecord;
}

/// Blocking cursor over a run's event log. Delivers every event with
/// seq > from_seq in order, then waits for new ones.
class Subscription {
 public:
  explicit Subscription(std::shared_ptr<detail::RunRecord> run, std::uint64_t from_seq);
  ~Subscription();
  Subscription(const Subscription&) = delete;
  Subscription& operator=(const Subscription&) = delete;

  /// Next event, or nullopt once `timeout` elapses or the subscription closes.
  std::optional<EventRecord> next(std::chrono::milliseconds timeout);
  /// Everything already in the log past the cursor, without waiting.
  std::vector<EventRecord> drain();
  void close();
  bool closed() const;

 private:
  std::shared_ptr<detail::RunRecord> run_;
  std::size_t cursor_;
  bool closed_ = false;
};

struct StoreOptions {
  /// Directory holding one subdirectory per run; in-memory only when empty.
  std::filesystem::path root;
  /// Test hook invoked between durable steps of a commit ("after_event_append").
  /// Throwing from it simulates a process kill at that point.
  std::function<void(std::string_view stage)> fault_injector;
};

class StateStore {
 public:
  explicit StateStore(StoreOptions options = {});
  ~StateStore();
  StateStore(const StateStore&) = delete;
  StateStore& operator=(const StateStore&) = delete;

  /// Registers a new run at version 0. A run id is generated when empty.
  std::string create_run(RunState initial);

  /// Loads a persisted run (after a restart), replaying any committed events
  /// the state document does not reflect yet. Returns the recovered version.
  std::uint64_t open_run(const std::string& run_id);

  std::uint64_t commit(const std::string& run_id, std::uint64_t base_version,
                       const Mutation& mutation, const std::string& actor);
  std::uint64_t commit_patch(const std::string& run_id, std::uint64_t base_version,
                             const json& patch, const std::string& actor);

  /// Snapshot, mutate, commit; retries on version conflicts.
  std::uint64_t update(const std::string& run_id, const Mutation& mutation,
                       const std::string& actor, int max_attempts = 64);

  RunState snapshot(const std::string& run_id) const;
  VersionedState snapshot_versioned(const std::string& run_id) const;

  std::uint64_t append_event(const std::string& run_id, const std::string& actor,
                             EventKind kind, json payload);
  std::unique_ptr<Subscription> subscribe(const std::string& run_id,
                                          std::uint64_t from_seq) const;
  std::vector<EventRecord> events(const std::string& run_id) const;

  bool has_run(const std::string& run_id) const;
  std::vector<std::string> run_ids() const;
  bool persistent() const { return !options_.root.empty(); }
  std::filesystem::path run_dir(const std::string& run_id) const;

  void write_transcript(const std::string& run_id, const std::string& scenario_id,
                        const json& transcript) const;
  void write_artifact(const std::string& run_id, const std::string& name,
                      const std::string& contents) const;

  /// Rebuilds a state purely from the `state_commit` events of a log.
  static RunState replay(const std::vector<EventRecord>& events);

 private:
  std::shared_ptr<detail::RunRecord> find(const std::string& run_id) const;
  void persist_state(const detail::RunRecord& run, std::uint64_t version,
                     const json& state) const;

  StoreOptions options_;
  mutable std::shared_mutex runs_mu_;
  std::map<std::string, std::shared_ptr<detail::RunRecord>> runs_;
  std::uint64_t run_counter_ = 0;
};

/// Checks the document-level invariants a commit must preserve.
void validate_transition(const RunState& before, const RunState& after);

/// Writes `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace ata
