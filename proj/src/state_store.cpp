// SPDX-License-Identifier: Apache-2.0
#include "ata/state_store.hpp"

#include <atomic>
#include <fstream>
#include <set>
#include <sstream>

#include "ata/error.hpp"

namespace ata {

namespace fs = std::filesystem;

namespace detail {

struct RunRecord {
  std::string run_id;
  fs::path dir;

  // Serializes commits; held across the durable writes of one commit.
  std::mutex commit_mu;

  // Guards only the pointer swap, so snapshots never wait on disk I/O.
  mutable std::mutex snapshot_mu;
  VersionedState current;
  // JSON form of current.state; touched only under commit_mu.
  json current_doc;

  mutable std::mutex events_mu;
  std::condition_variable events_cv;
  std::vector<EventRecord> events;
  std::ofstream event_log;
  std::atomic<int> live_subscriptions{0};
};

}  // namespace detail

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

EventRecord append_locked(detail::RunRecord& run, const std::string& actor, EventKind kind,
                          json payload) {
  EventRecord record;
  record.seq = run.events.empty() ? 1 : run.events.back().seq + 1;
  record.timestamp_ms = now_ms();
  record.actor = actor;
  record.kind = kind;
  record.payload = std::move(payload);
  if (run.event_log.is_open()) {
    run.event_log << json(record).dump() << '\n';
    run.event_log.flush();
    if (!run.event_log) {
      throw Error(ErrorCode::io, "failed to append to event log of " + run.run_id);
    }
  }
  run.events.push_back(record);
  return record;
}

std::string pointer_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// JSON Patch taking the serialized `before` to the serialized `after`.
// Structural comparison decides what changed, so only changed fields and
// scenarios are serialized. Every RunState key is always present (optionals
// serialize as null), which makes top-level "replace" valid.
json structural_patch(const RunState& before, const RunState& after) {
  json patch = json::array();
  auto field = [&](const char* name, const auto& a, const auto& b) {
    if (!(a == b)) patch.push_back({{"op", "replace"}, {"path", std::string("/") + name}, {"value", json(b)}});
  };
  auto optional_field = [&](const char* name, const auto& a, const auto& b) {
    if (!(a == b)) {
      patch.push_back({{"op", "replace"}, {"path", std::string("/") + name}, {"value", b ? json(*b) : json(nullptr)}});
    }
  };
  field("run_id", before.run_id, after.run_id);
  field("aut_ref", before.aut_ref, after.aut_ref);
  field("testing_focus", before.testing_focus, after.testing_focus);
  field("settings", before.settings, after.settings);
  field("user_answers", before.user_answers, after.user_answers);
  optional_field("pending_question", before.pending_question, after.pending_question);
  optional_field("code_analysis", before.code_analysis, after.code_analysis);
  field("search_findings", before.search_findings, after.search_findings);
  optional_field("rubric", before.rubric, after.rubric);
  field("weaknesses", before.weaknesses, after.weaknesses);
  for (const auto& [wid, old_list] : before.scenarios) {
    if (!after.scenarios.contains(wid)) {
      patch.push_back({{"op", "remove"}, {"path", "/scenarios/" + pointer_token(wid)}});
    }
  }
  for (const auto& [wid, list] : after.scenarios) {
    const std::string base = "/scenarios/" + pointer_token(wid);
    auto old = before.scenarios.find(wid);
    if (old == before.scenarios.end() || old->second.size() > list.size()) {
      patch.push_back({{"op", "add"}, {"path", base}, {"value", json(list)}});
      continue;
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i >= old->second.size()) {
        patch.push_back({{"op", "add"}, {"path", base + "/-"}, {"value", json(list[i])}});
      } else if (!(old->second[i] == list[i])) {
        patch.push_back({{"op", "replace"}, {"path", base + "/" + std::to_string(i)}, {"value", json(list[i])}});
      }
    }
  }
  optional_field("report", before.report, after.report);
  field("phase", before.phase, after.phase);
  optional_field("failure", before.failure, after.failure);
  return patch;
}

}  // namespace

void to_json(json& j, const EventRecord& v) {
  j = {{"seq", v.seq},
       {"timestamp_ms", v.timestamp_ms},
       {"actor", v.actor},
       {"kind", v.kind},
       {"payload", v.payload}};
}

void from_json(const json& j, EventRecord& v) {
  v.seq = j.at("seq").get<std::uint64_t>();
  v.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
  v.actor = j.value("actor", std::string{});
  v.kind = j.at("kind").get<EventKind>();
  v.payload = j.value("payload", json(nullptr));
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::io, "cannot rename onto " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void validate_transition(const RunState& before, const RunState& after) {
  if (!phase_transition_allowed(before.phase, after.phase)) {
    throw Error(ErrorCode::phase_violation,
                std::string(to_string(before.phase)) + " -> " + std::string(to_string(after.phase)));
  }
  if (after.run_id != before.run_id) {
    throw Error(ErrorCode::invariant_violation, "run_id is immutable");
  }
  std::set<std::string> ids;
  for (const auto& w : after.weaknesses) {
    if (!ids.insert(w.weakness_id).second) {
      throw Error(ErrorCode::invariant_violation, "duplicate weakness id " + w.weakness_id);
    }
  }
  for (const auto& [wid, list] : after.scenarios) {
    if (!ids.contains(wid)) {
      throw Error(ErrorCode::invariant_violation, "scenarios reference unknown weakness " + wid);
    }
    for (const auto& sc : list) {
      if (sc.weakness_id != wid) {
        throw Error(ErrorCode::invariant_violation,
                    "scenario " + sc.scenario_id + " filed under " + wid);
      }
    }
  }
  for (const auto& [wid, old_list] : before.scenarios) {
    auto it = after.scenarios.find(wid);
    if (it == after.scenarios.end() || it->second.size() < old_list.size()) {
      throw Error(ErrorCode::invariant_violation, "scenario list of " + wid + " shrank");
    }
    for (std::size_t i = 0; i < old_list.size(); ++i) {
      if (it->second[i].scenario_id != old_list[i].scenario_id) {
        throw Error(ErrorCode::invariant_violation, "scenario list of " + wid + " reordered");
      }
      const auto& was = old_list[i].judge_result;
      const auto& now = it->second[i].judge_result;
      if (was && (!now || *was != *now)) {
        throw Error(ErrorCode::already_judged, "judge result of " + old_list[i].scenario_id + " is immutable");
      }
    }
  }
}

// --- Subscription ------------------------------------------------------------

Subscription::Subscription(std::shared_ptr<detail::RunRecord> run, std::uint64_t from_seq)
    : run_(std::move(run)), cursor_(0) {
  std::lock_guard lock(run_->events_mu);
  // Sequence numbers are dense from 1, but search anyway.
  while (cursor_ < run_->events.size() && run_->events[cursor_].seq <= from_seq) ++cursor_;
  run_->live_subscriptions++;
}

Subscription::~Subscription() { close(); }

std::optional<EventRecord> Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(run_->events_mu);
  if (!run_->events_cv.wait_for(lock, timeout,
                                [&] { return closed_ || cursor_ < run_->events.size(); })) {
    return std::nullopt;
  }
  if (closed_) return std::nullopt;
  return run_->events[cursor_++];
}

std::vector<EventRecord> Subscription::drain() {
  std::lock_guard lock(run_->events_mu);
  std::vector<EventRecord> out;
  if (closed_) return out;
  out.assign(run_->events.begin() + static_cast<std::ptrdiff_t>(cursor_), run_->events.end());
  cursor_ = run_->events.size();
  return out;
}

void Subscription::close() {
  {
    std::lock_guard lock(run_->events_mu);
    if (closed_) return;
    closed_ = true;
    run_->live_subscriptions--;
  }
  run_->events_cv.notify_all();
}

bool Subscription::closed() const {
  std::lock_guard lock(run_->events_mu);
  return closed_;
}

// --- StateStore --------------------------------------------------------------

StateStore::StateStore(StoreOptions options) : options_(std::move(options)) {
  if (persistent()) fs::create_directories(options_.root);
}

StateStore::~StateStore() = default;

fs::path StateStore::run_dir(const std::string& run_id) const {
  return persistent() ? options_.root / run_id : fs::path{};
}

std::shared_ptr<detail::RunRecord> StateStore::find(const std::string& run_id) const {
  std::shared_lock lock(runs_mu_);
  auto it = runs_.find(run_id);
  if (it == runs_.end()) throw Error(ErrorCode::unknown_run, run_id);
  return it->second;
}

bool StateStore::has_run(const std::string& run_id) const {
  std::shared_lock lock(runs_mu_);
  return runs_.contains(run_id);
}

std::vector<std::string> StateStore::run_ids() const {
  std::shared_lock lock(runs_mu_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : runs_) ids.push_back(id);
  return ids;
}

void StateStore::persist_state(const detail::RunRecord& run, std::uint64_t version,
                               const json& state) const {
  if (!persistent()) return;
  json doc = {{"version", version}, {"state", state}};
  write_file_atomic(run.dir / "state.json", doc.dump(2) + "\n");
}

std::string StateStore::create_run(RunState initial) {
  auto run = std::make_shared<detail::RunRecord>();
  {
    std::unique_lock lock(runs_mu_);
    if (initial.run_id.empty()) {
      initial.run_id = "run-" + std::to_string(now_ms()) + "-" + std::to_string(++run_counter_);
    }
    if (runs_.contains(initial.run_id)) {
      throw Error(ErrorCode::invalid_config, "run " + initial.run_id + " already exists");
    }
    runs_[initial.run_id] = run;
  }
  run->run_id = initial.run_id;
  if (persistent()) {
    run->dir = options_.root / run->run_id;
    fs::create_directories(run->dir / "transcripts");
    run->event_log.open(run->dir / "events.ndjson", std::ios::binary | std::ios::trunc);
  }
  json state = initial;
  {
    std::lock_guard lock(run->events_mu);
    append_locked(*run, "state-store", EventKind::state_commit,
                  {{"base_version", nullptr}, {"version", 0}, {"initial", state}});
  }
  persist_state(*run, 0, state);
  run->current_doc = std::move(state);
  std::lock_guard lock(run->snapshot_mu);
  run->current = {0, std::make_shared<const RunState>(std::move(initial))};
  return run->run_id;
}

std::uint64_t StateStore::open_run(const std::string& run_id) {
  if (!persistent()) throw Error(ErrorCode::unknown_run, run_id + " (store is in-memory)");
  auto run = std::make_shared<detail::RunRecord>();
  run->run_id = run_id;
  run->dir = options_.root / run_id;
  if (!fs::exists(run->dir / "events.ndjson")) throw Error(ErrorCode::unknown_run, run_id);

  // A torn final line is an append that never completed; drop it.
  std::vector<EventRecord> events;
  {
    std::istringstream lines(read_file(run->dir / "events.ndjson"));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      json parsed = json::parse(line, nullptr, false);
      if (parsed.is_discarded()) break;
      events.push_back(parsed.get<EventRecord>());
    }
  }

  json state;
  std::uint64_t version = 0;
  bool have_state = false;
  if (fs::exists(run->dir / "state.json")) {
    json doc = json::parse(read_file(run->dir / "state.json"), nullptr, false);
    if (!doc.is_discarded()) {
      version = doc.at("version").get<std::uint64_t>();
      state = doc.at("state");
      have_state = true;
    }
  }
  for (const auto& ev : events) {
    if (ev.kind != EventKind::state_commit) continue;
    const auto v = ev.payload.at("version").get<std::uint64_t>();
    if (!have_state && ev.payload.contains("initial")) {
      state = ev.payload.at("initial");
      version = v;
      have_state = true;
    } else if (have_state && v == version + 1) {
      state = state.patch(ev.payload.at("patch"));
      version = v;
    }
  }
  if (!have_state) throw Error(ErrorCode::unknown_run, run_id + " has no state");

  // Rewrite the log without any torn tail before appending to it again.
  {
    std::string rewritten;
    for (const auto& ev : events) rewritten += json(ev).dump() + "\n";
    write_file_atomic(run->dir / "events.ndjson", rewritten);
  }
  run->events = std::move(events);
  run->event_log.open(run->dir / "events.ndjson", std::ios::binary | std::ios::app);
  persist_state(*run, version, state);
  run->current = {version, std::make_shared<const RunState>(state.get<RunState>())};
  run->current_doc = std::move(state);
  {
    std::unique_lock lock(runs_mu_);
    runs_[run_id] = run;
  }
  return version;
}

std::uint64_t StateStore::commit(const std::string& run_id, std::uint64_t base_version,
                                 const Mutation& mutation, const std::string& actor) {
  auto run = find(run_id);
  std::lock_guard commit_lock(run->commit_mu);
  VersionedState current;
  {
    std::lock_guard lock(run->snapshot_mu);
    current = run->current;
  }
  if (current.version != base_version) {
    throw Error(ErrorCode::version_conflict,
                run_id + " is at version " + std::to_string(current.version) + ", not " +
                    std::to_string(base_version));
  }
  RunState next = *current.state;
  mutation(next);
  validate_transition(*current.state, next);

  json patch = structural_patch(*current.state, next);
  const std::uint64_t version = base_version + 1;
  {
    std::lock_guard lock(run->events_mu);
    append_locked(*run, actor, EventKind::state_commit,
                  {{"base_version", base_version}, {"version", version}, {"patch", patch}});
  }
  run->events_cv.notify_all();
  if (options_.fault_injector) options_.fault_injector("after_event_append");
  // The commit is durable once its event is logged.
  run->current_doc.patch_inplace(patch);
  {
    std::lock_guard lock(run->snapshot_mu);
    run->current = {version, std::make_shared<const RunState>(std::move(next))};
  }
  persist_state(*run, version, run->current_doc);
  return version;
}

std::uint64_t StateStore::commit_patch(const std::string& run_id, std::uint64_t base_version,
                                       const json& patch, const std::string& actor) {
  return commit(
      run_id, base_version,
      [&](RunState& state) { state = json(state).patch(patch).get<RunState>(); }, actor);
}

std::uint64_t StateStore::update(const std::string& run_id, const Mutation& mutation,
                                 const std::string& actor, int max_attempts) {
  for (int attempt = 1;; ++attempt) {
    const auto base = snapshot_versioned(run_id).version;
    try {
      return commit(run_id, base, mutation, actor);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::version_conflict || attempt >= max_attempts) throw;
    }
  }
}

RunState StateStore::snapshot(const std::string& run_id) const {
  return *snapshot_versioned(run_id).state;
}

VersionedState StateStore::snapshot_versioned(const std::string& run_id) const {
  auto run = find(run_id);
  std::lock_guard lock(run->snapshot_mu);
  return run->current;
}

std::uint64_t StateStore::append_event(const std::string& run_id, const std::string& actor,
                                       EventKind kind, json payload) {
  if (kind == EventKind::state_commit) {
    throw Error(ErrorCode::invariant_violation, "state_commit events come only from commit()");
  }
  auto run = find(run_id);
  std::uint64_t seq;
  {
    std::lock_guard lock(run->events_mu);
    seq = append_locked(*run, actor, kind, std::move(payload)).seq;
  }
  run->events_cv.notify_all();
  return seq;
}

std::unique_ptr<Subscription> StateStore::subscribe(const std::string& run_id,
                                                    std::uint64_t from_seq) const {
  return std::make_unique<Subscription>(find(run_id), from_seq);
}

std::vector<EventRecord> StateStore::events(const std::string& run_id) const {
  auto run = find(run_id);
  std::lock_guard lock(run->events_mu);
  return run->events;
}

void StateStore::write_transcript(const std::string& run_id, const std::string& scenario_id,
                                  const json& transcript) const {
  if (!persistent()) return;
  write_file_atomic(run_dir(run_id) / "transcripts" / (scenario_id + ".json"),
                    transcript.dump(2) + "\n");
}

void StateStore::write_artifact(const std::string& run_id, const std::string& name,
                                const std::string& contents) const {
  if (!persistent()) return;
  write_file_atomic(run_dir(run_id) / name, contents);
}

RunState StateStore::replay(const std::vector<EventRecord>& events) {
  json state;
  bool initialized = false;
  for (const auto& ev : events) {
    if (ev.kind != EventKind::state_commit) continue;
    if (ev.payload.contains("initial")) {
      state = ev.payload.at("initial");
      initialized = true;
    } else if (initialized) {
      state = state.patch(ev.payload.at("patch"));
    }
  }
  if (!initialized) throw Error(ErrorCode::unknown_run, "event log has no initial state");
  return state.get<RunState>();
}

}  // namespace ata
