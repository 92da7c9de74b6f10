// SPDX-License-Identifier: Apache-2.0
//
// Every reasoning step goes through LlmGateway. Roles map to backends; a
// backend is either an HTTP chat-completions endpoint or the scripted mock.
// Structured calls validate the reply against a schema and, on failure,
// append a repair instruction and retry within the role's retry budget.
#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ata {

using nlohmann::json;

enum class ModelRole {
  planner_deep,
  persona_deep,
  judge_deep,
  dialogue_light,
  analysis_light,
  report_light,
};

inline constexpr ModelRole kAllRoles[] = {
    ModelRole::planner_deep,   ModelRole::persona_deep,   ModelRole::judge_deep,
    ModelRole::dialogue_light, ModelRole::analysis_light, ModelRole::report_light,
};

std::string_view to_string(ModelRole role);
ModelRole model_role_from_string(std::string_view name);

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

void to_json(json& j, const ChatMessage& m);
void from_json(const json& j, ChatMessage& m);

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int calls = 0;
};

struct ChatExchange {
  std::vector<ChatMessage> messages;
  std::string content;
  std::string finish_reason;
  Usage usage;
  double latency_ms = 0;
  std::optional<json> parsed;
  std::vector<std::string> raw_replies;
};

struct BackendRequest {
  ModelRole role = ModelRole::analysis_light;
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int max_tokens = 2048;
  std::chrono::milliseconds timeout{60000};
  const json* schema = nullptr;
};

struct BackendReply {
  std::string content;
  std::string finish_reason = "stop";
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Throws Error{backend_unreachable | timeout} on transport failure.
  virtual BackendReply chat(const BackendRequest& request) = 0;
  virtual bool is_mock() const { return false; }
};

/// Prefix of the repair instruction appended after an invalid structured reply.
inline constexpr std::string_view kRepairPrefix =
    "Your previous reply did not match the required JSON schema.";

/// Scripted backend. Replies are looked up by (role, FNV-1a hash of the last
/// non-repair user message); each entry holds a list consumed in order, with
/// the last reply repeating. Unmatched requests go to the responder callback,
/// then to per-role defaults, then to the global default.
class MockBackend : public ChatBackend {
 public:
  using Responder = std::function<std::optional<std::string>(const BackendRequest&)>;

  explicit MockBackend(json script = json::object(), Responder responder = {});

  BackendReply chat(const BackendRequest& request) override;
  bool is_mock() const override { return true; }

  void add_reply(std::optional<ModelRole> role, std::string_view user_message,
                 std::vector<std::string> replies);
  void set_responder(Responder responder);
  int calls() const;

  /// The key a request is matched on.
  static std::string key_for(const BackendRequest& request);

 private:
  struct Entry {
    std::vector<std::string> replies;
    std::size_t next = 0;
  };
  static std::string entry_key(std::optional<ModelRole> role, const std::string& hash);

  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
  std::map<std::string, Entry> role_defaults_;
  std::optional<std::string> default_reply_;
  Responder responder_;
  int calls_ = 0;
};

/// OpenAI-style POST {model, messages, temperature, max_tokens} ->
/// {choices[0].message.content, usage}.
class HttpChatBackend : public ChatBackend {
 public:
  struct Config {
    std::string endpoint;  // full URL, e.g. https://host/v1/chat/completions
    std::string model;
    std::string api_key_env;  // name of the variable, never the key itself
    bool json_mode = true;
  };

  explicit HttpChatBackend(Config config);
  BackendReply chat(const BackendRequest& request) override;

 private:
  Config config_;
  std::string scheme_host_;
  std::string path_;
};

struct RoleSettings {
  std::string backend;
  std::string model;
  double temperature = 0.7;
  int max_tokens = 2048;
  std::chrono::milliseconds timeout{60000};
  int retry_budget = 3;
  int max_concurrency = 8;
};

RoleSettings default_role_settings(ModelRole role);

/// Per-call telemetry handed to the observer (role, usage, latency, ...).
using CallObserver = std::function<void(const json& record)>;

class LlmGateway {
 public:
  LlmGateway();
  ~LlmGateway();
  LlmGateway(const LlmGateway&) = delete;
  LlmGateway& operator=(const LlmGateway&) = delete;

  /// `config` = {"name": ref, "transport": "mock"|"http", ...}. Mock configs
  /// take an inline "script" object or a "script_path"; HTTP configs need
  /// "endpoint" and "model". Returns the backend ref.
  std::string register_backend(const json& config,
                               const std::filesystem::path& base_dir = {});
  void register_backend(const std::string& ref, std::shared_ptr<ChatBackend> backend);

  /// Assigns a role. Throws invalid_config for an unknown backend ref.
  void configure_role(ModelRole role, RoleSettings settings);
  /// Routes every role to `ref`, keeping per-role temperatures.
  void route_all(const std::string& ref);

  RoleSettings role_settings(ModelRole role) const;
  std::shared_ptr<ChatBackend> backend(const std::string& ref) const;
  std::shared_ptr<ChatBackend> backend_for(ModelRole role) const;

  /// Throws invalid_config unless every role is routed and the persona and
  /// judge roles share one backend.
  void validate() const;

  ChatExchange complete(ModelRole role, std::vector<ChatMessage> messages,
                        const json* schema = nullptr, const CallObserver& observer = {});

 private:
  class Limiter;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
  std::map<ModelRole, RoleSettings> roles_;
  std::map<ModelRole, std::shared_ptr<Limiter>> limiters_;
};

/// Loads a gateway config file:
///   {"backends": [ {name, transport, ...}, ... ],
///    "roles": {"default": {...}, "<role>": {...}}}
/// Role entries accept backend, model, temperature, max_tokens, timeout_ms,
/// retry_budget, max_concurrency.
void load_gateway_config(LlmGateway& gateway, const json& config,
                         const std::filesystem::path& base_dir = {});

/// A gateway bound to an observer (usually the run's event log).
class ModelClient {
 public:
  explicit ModelClient(LlmGateway& gateway, CallObserver observer = {})
      : gateway_(&gateway), observer_(std::move(observer)) {}

  ChatExchange complete(ModelRole role, std::vector<ChatMessage> messages,
                        const json* schema = nullptr) const {
    return gateway_->complete(role, std::move(messages), schema, observer_);
  }

  /// Structured call; returns the validated object.
  json complete_json(ModelRole role, std::vector<ChatMessage> messages, const json& schema) const {
    return *complete(role, std::move(messages), &schema).parsed;
  }

  LlmGateway& gateway() const { return *gateway_; }

 private:
  LlmGateway* gateway_;
  CallObserver observer_;
};

/// Prompt helpers shared by the stages. A task tag in the system prompt and a
/// <context> JSON block in the user prompt keep prompts machine-checkable.
std::string task_tag(std::string_view task);
std::string with_context(std::string_view instructions, const json& context);
std::optional<std::string> find_task(const std::vector<ChatMessage>& messages);
std::optional<json> find_context(const std::vector<ChatMessage>& messages);

}  // namespace ata
