// SPDX-License-Identifier: Apache-2.0
#include "ata/aut_adapter.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <regex>
#include <thread>

#include "ata/error.hpp"
#include "ata/state_store.hpp"

namespace ata {

namespace fs = std::filesystem;

void to_json(json& j, const AutRegistration& v) {
  j = {{"aut_id", v.aut_id},
       {"display_name", v.display_name},
       {"description", v.description},
       {"transport", v.transport},
       {"timeout_ms", v.timeout.count()}};
  if (!v.endpoint.empty()) j["endpoint"] = v.endpoint;
  if (!v.command.empty()) j["command"] = v.command;
  if (!v.behavior.is_null()) j["behavior"] = v.behavior;
  if (v.codebase_path) j["codebase_path"] = v.codebase_path->string();
  if (v.provided_rubric) j["provided_rubric"] = *v.provided_rubric;
}

void from_json(const json& j, AutRegistration& v) {
  v.aut_id = j.at("aut_id").get<std::string>();
  v.display_name = j.value("display_name", v.aut_id);
  v.description = j.value("description", std::string{});
  const std::string transport = j.value("transport", std::string("scripted"));
  if (transport == "http") v.transport = AutTransport::http;
  else if (transport == "subprocess") v.transport = AutTransport::subprocess;
  else if (transport == "scripted") v.transport = AutTransport::scripted;
  else throw Error(ErrorCode::registration, "unknown transport '" + transport + "'");
  v.endpoint = j.value("endpoint", std::string{});
  v.command = j.value("command", std::vector<std::string>{});
  v.behavior = j.value("behavior", json(nullptr));
  if (j.contains("codebase_path") && !j["codebase_path"].is_null()) {
    v.codebase_path = fs::path(j["codebase_path"].get<std::string>());
  }
  if (j.contains("provided_rubric") && j["provided_rubric"].is_object()) {
    v.provided_rubric = j["provided_rubric"].get<Rubric>();
  }
  v.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000L));
}

// --- markers -----------------------------------------------------------------

namespace {

std::string fixed2(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.2f", value);
  return buffer;
}

std::optional<double> parse_after(const std::string& text, const std::regex& pattern) {
  std::smatch match;
  if (std::regex_search(text, match, pattern)) return std::stod(match[1].str());
  return std::nullopt;
}

}  // namespace

std::string difficulty_marker(double difficulty) { return "challenge level " + fixed2(difficulty); }

std::optional<double> parse_difficulty_marker(const std::string& text) {
  static const std::regex pattern(R"(challenge level ([0-9]+(?:\.[0-9]+)?))");
  return parse_after(text, pattern);
}

std::string quality_marker(double quality) { return "[quality " + fixed2(quality) + "]"; }

std::optional<double> parse_quality_marker(const std::string& text) {
  static const std::regex pattern(R"(\[quality ([0-9]+(?:\.[0-9]+)?)\])");
  return parse_after(text, pattern);
}

double boundary_quality(double boundary, double difficulty, double noise_sample) {
  return std::clamp(5.5 + 2.0 * (boundary - difficulty) + noise_sample, 1.0, 10.0);
}

AutRegistration make_boundary_mock(double boundary, double noise, std::string aut_id) {
  if (!std::isfinite(boundary) || boundary < 1.0 || boundary > 10.0) {
    throw Error(ErrorCode::domain_error, "boundary must lie in [1, 10]");
  }
  if (!(noise >= 0.0)) throw Error(ErrorCode::domain_error, "noise must be non-negative");
  AutRegistration reg;
  reg.aut_id = aut_id.empty() ? "mock-boundary-" + fixed2(boundary) : std::move(aut_id);
  reg.display_name = "Boundary mock (b=" + fixed2(boundary) + ")";
  reg.description = "Scripted assistant whose answers degrade past difficulty " + fixed2(boundary) + ".";
  reg.transport = AutTransport::scripted;
  reg.behavior = {{"kind", "boundary"}, {"boundary", boundary}, {"noise", noise}};
  return reg;
}

// --- scripted sessions -------------------------------------------------------

namespace {

class ScriptedSession : public AutSession {
 public:
  ScriptedSession(const AutRegistration& reg, std::string session_id, std::uint64_t seed)
      : behavior_(reg.behavior),
        timeout_(reg.timeout),
        session_id_(std::move(session_id)),
        rng_(fnv1a(session_id_) ^ (seed * 0x9E3779B97F4A7C15ULL)) {
    kind_ = behavior_.value("kind", std::string("echo"));
  }

  const std::string& session_id() const override { return session_id_; }

  AutTurnResult send(const std::string& user_message) override {
    const auto start = std::chrono::steady_clock::now();
    ++turn_;
    history_.push_back(user_message);
    AutTurnResult result = respond(user_message);
    result.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
  }

 private:
  bool on_turn(const char* key) const {
    return behavior_.contains(key) && behavior_[key].get<int>() == turn_;
  }

  AutTurnResult respond(const std::string& message) {
    if (crashed_ || on_turn("crash_on_turn")) {
      crashed_ = true;
      return {std::nullopt, TurnStatus::crash, 0};
    }
    if (on_turn("timeout_on_turn")) {
      std::this_thread::sleep_for(timeout_);
      return {std::nullopt, TurnStatus::timeout, 0};
    }
    if (auto delay = behavior_.value("delay_ms", 0L); delay > 0) {
      const auto wait = std::chrono::milliseconds(delay);
      if (wait > timeout_) {
        std::this_thread::sleep_for(timeout_);
        return {std::nullopt, TurnStatus::timeout, 0};
      }
      std::this_thread::sleep_for(wait);
    }
    if (on_turn("null_on_turn")) return {std::string{}, TurnStatus::null_reply, 0};

    std::string reply;
    if (kind_ == "echo") {
      reply = message;
    } else if (kind_ == "recall") {
      for (std::size_t i = 0; i < history_.size(); ++i) {
        reply += (i ? " | " : "") + history_[i];
      }
    } else if (kind_ == "script") {
      const auto& replies = behavior_.at("replies");
      reply = replies.empty() ? std::string{}
                              : replies[static_cast<std::size_t>(turn_ - 1) % replies.size()].get<std::string>();
    } else if (kind_ == "boundary") {
      reply = boundary_reply(message);
    } else {
      reply = behavior_.value("reply", std::string{});
    }
    if (on_turn("goal_on_turn")) reply += " Everything you asked for is covered, " + std::string(kGoalSatisfiedPhrase) + ".";
    if (reply.empty()) return {std::string{}, TurnStatus::null_reply, 0};
    return {std::move(reply), TurnStatus::ok, 0};
  }

  std::string boundary_reply(const std::string& message) {
    if (!quality_) {
      const double boundary = behavior_.at("boundary").get<double>();
      const double sigma = behavior_.value("noise", 0.0);
      const double difficulty = parse_difficulty_marker(message).value_or(5.5);
      double noise = 0.0;
      if (sigma > 0.0) noise = std::normal_distribution<double>(0.0, sigma)(rng_);
      quality_ = boundary_quality(boundary, difficulty, noise);
    }
    if (*quality_ >= 5.5) {
      return "I worked through each of your requirements and here is a plan that satisfies them. " +
             quality_marker(*quality_);
    }
    return "I could only address part of what you asked; some constraints are not handled. " +
           quality_marker(*quality_);
  }

  json behavior_;
  std::chrono::milliseconds timeout_;
  std::string session_id_;
  std::string kind_;
  std::mt19937_64 rng_;
  std::vector<std::string> history_;
  std::optional<double> quality_;
  int turn_ = 0;
  bool crashed_ = false;
};

// --- subprocess sessions -----------------------------------------------------

class SubprocessSession : public AutSession {
 public:
  SubprocessSession(const AutRegistration& reg, std::string session_id)
      : session_id_(std::move(session_id)), timeout_(reg.timeout) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) {
      throw Error(ErrorCode::unreachable, "cannot create pipes for " + reg.aut_id);
    }
    pid_ = fork();
    if (pid_ < 0) throw Error(ErrorCode::unreachable, "cannot fork for " + reg.aut_id);
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      std::vector<char*> argv;
      for (const auto& arg : reg.command) argv.push_back(const_cast<char*>(arg.c_str()));
      argv.push_back(nullptr);
      execvp(argv[0], argv.data());
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    signal(SIGPIPE, SIG_IGN);
  }

  ~SubprocessSession() override {
    if (write_fd_ >= 0) close(write_fd_);
    if (read_fd_ >= 0) close(read_fd_);
    if (pid_ > 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, nullptr, 0);
    }
  }

  const std::string& session_id() const override { return session_id_; }

  AutTurnResult send(const std::string& user_message) override {
    const auto start = std::chrono::steady_clock::now();
    auto finish = [&](AutTurnResult r) {
      r.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      return r;
    };
    if (dead_) return finish({std::nullopt, TurnStatus::crash, 0});

    const std::string line =
        json{{"type", "user_msg"}, {"session", session_id_}, {"text", user_message}}.dump() + "\n";
    if (!write_all(line)) {
      dead_ = true;
      return finish({std::nullopt, TurnStatus::crash, 0});
    }
    const auto deadline = start + timeout_;
    while (true) {
      if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
        std::string reply_line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        json reply = json::parse(reply_line, nullptr, false);
        if (reply.is_discarded() || reply.value("type", std::string{}) != "agent_msg") {
          continue;  // not part of the protocol; agents may log to stdout
        }
        std::string text = reply.value("text", std::string{});
        if (text.empty()) return finish({std::string{}, TurnStatus::null_reply, 0});
        return finish({std::move(text), TurnStatus::ok, 0});
      }
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0) return finish({std::nullopt, TurnStatus::timeout, 0});
      pollfd pfd{read_fd_, POLLIN, 0};
      const int ready = poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (ready == 0) return finish({std::nullopt, TurnStatus::timeout, 0});
      if (ready < 0) continue;
      char chunk[4096];
      const ssize_t n = read(read_fd_, chunk, sizeof chunk);
      if (n <= 0) {
        dead_ = true;
        return finish({std::nullopt, TurnStatus::crash, 0});
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  bool write_all(const std::string& data) {
    std::size_t written = 0;
    while (written < data.size()) {
      const ssize_t n = write(write_fd_, data.data() + written, data.size() - written);
      if (n <= 0) return false;
      written += static_cast<std::size_t>(n);
    }
    return true;
  }

  std::string session_id_;
  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
  bool dead_ = false;
};

}  // namespace

namespace detail {
std::unique_ptr<AutSession> open_subprocess_session(const AutRegistration& reg,
                                                    const std::string& session_key) {
  return std::make_unique<SubprocessSession>(reg, session_key);
}
}  // namespace detail

// --- registry ----------------------------------------------------------------

void AutRegistry::add(AutRegistration registration) {
  if (registration.aut_id.empty()) throw Error(ErrorCode::registration, "aut_id is required");
  switch (registration.transport) {
    case AutTransport::http:
      if (registration.endpoint.empty()) {
        throw Error(ErrorCode::registration, registration.aut_id + ": http transport needs an endpoint");
      }
      break;
    case AutTransport::subprocess:
      if (registration.command.empty()) {
        throw Error(ErrorCode::registration, registration.aut_id + ": subprocess transport needs a command");
      }
      break;
    case AutTransport::scripted:
      if (!registration.behavior.is_object()) {
        throw Error(ErrorCode::registration, registration.aut_id + ": scripted transport needs a behavior");
      }
      break;
  }
  auts_[registration.aut_id] = std::move(registration);
}

const AutRegistration& AutRegistry::get(const std::string& aut_id) const {
  auto it = auts_.find(aut_id);
  if (it == auts_.end()) throw Error(ErrorCode::registration, "no registered agent '" + aut_id + "'");
  return it->second;
}

std::vector<std::string> AutRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : auts_) out.push_back(id);
  return out;
}

void AutRegistry::load(const json& document, const fs::path& base_dir) {
  const json& list = document.is_object() ? document.at("auts") : document;
  if (!list.is_array()) throw Error(ErrorCode::registration, "auts document must be a list");
  for (const auto& record : list) {
    json copy = record;
    if (copy.contains("provided_rubric") && copy["provided_rubric"].is_string()) {
      fs::path rubric_path = copy["provided_rubric"].get<std::string>();
      if (rubric_path.is_relative()) rubric_path = base_dir / rubric_path;
      copy["provided_rubric"] = json::parse(read_file(rubric_path));
    }
    auto reg = copy.get<AutRegistration>();
    if (reg.codebase_path && reg.codebase_path->is_relative() && !base_dir.empty()) {
      reg.codebase_path = base_dir / *reg.codebase_path;
    }
    add(std::move(reg));
  }
}

void AutRegistry::load_file(const fs::path& path) {
  json document = json::parse(read_file(path), nullptr, false);
  if (document.is_discarded()) throw Error(ErrorCode::registration, path.string() + " is not valid JSON");
  load(document, path.parent_path());
}

std::unique_ptr<AutSession> AutRegistry::open_session(const std::string& aut_id,
                                                      const std::string& session_key,
                                                      std::uint64_t seed) const {
  const auto& reg = get(aut_id);
  switch (reg.transport) {
    case AutTransport::scripted:
      return std::make_unique<ScriptedSession>(reg, session_key, seed);
    case AutTransport::subprocess:
      return detail::open_subprocess_session(reg, session_key);
    case AutTransport::http:
      return detail::open_http_session(reg, session_key);
  }
  throw Error(ErrorCode::registration, "unsupported transport");
}

AutRegistry AutRegistry::with_builtins() {
  AutRegistry registry;
  auto scripted = [&](std::string id, std::string name, std::string description, json behavior) {
    AutRegistration reg;
    reg.aut_id = std::move(id);
    reg.display_name = std::move(name);
    reg.description = std::move(description);
    reg.transport = AutTransport::scripted;
    reg.behavior = std::move(behavior);
    registry.add(std::move(reg));
  };
  scripted("mock-echo", "Echo agent", "Repeats every user message verbatim.", {{"kind", "echo"}});
  scripted("mock-recall", "Recall agent", "Replies with every message of its conversation so far.",
           {{"kind", "recall"}});
  scripted("mock-travel", "Scripted travel planner",
           "Plans trips through conversation: flights, hotels, activities within a budget.",
           {{"kind", "script"},
            {"replies",
             {"Happy to help plan your trip. Which dates and budget should I work with?",
              "Here is a draft itinerary: flight, a mid-range hotel, and two activities per day.",
              "I adjusted the plan to your constraints; one flight option exceeds the budget.",
              "Final plan attached. Let me know if anything should change."}}});
  for (int b = 2; b <= 9; ++b) {
    registry.add(make_boundary_mock(b, 0.5, "mock-boundary-" + std::to_string(b)));
  }
  return registry;
}

}  // namespace ata
