// SPDX-License-Identifier: Apache-2.0
#include "ata/llm_gateway.hpp"

#include <thread>

#include "ata/error.hpp"
#include "ata/schema.hpp"
#include "ata/state_store.hpp"
#include "ata/types.hpp"

namespace ata {

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::planner_deep: return "planner_deep";
    case ModelRole::persona_deep: return "persona_deep";
    case ModelRole::judge_deep: return "judge_deep";
    case ModelRole::dialogue_light: return "dialogue_light";
    case ModelRole::analysis_light: return "analysis_light";
    case ModelRole::report_light: return "report_light";
  }
  return "analysis_light";
}

ModelRole model_role_from_string(std::string_view name) {
  for (ModelRole role : kAllRoles) {
    if (to_string(role) == name) return role;
  }
  throw Error(ErrorCode::invalid_config, "unknown model role '" + std::string(name) + "'");
}

void to_json(json& j, const ChatMessage& m) { j = {{"role", m.role}, {"content", m.content}}; }
void from_json(const json& j, ChatMessage& m) {
  m.role = j.at("role").get<std::string>();
  m.content = j.at("content").get<std::string>();
}

RoleSettings default_role_settings(ModelRole role) {
  RoleSettings s;
  switch (role) {
    case ModelRole::planner_deep:
    case ModelRole::persona_deep:
      s.temperature = 0.7;
      s.max_tokens = 4096;
      break;
    case ModelRole::judge_deep:
      s.temperature = 0.0;
      s.max_tokens = 4096;
      break;
    case ModelRole::dialogue_light:
      s.temperature = 0.7;
      s.max_tokens = 1024;
      break;
    case ModelRole::analysis_light:
    case ModelRole::report_light:
      s.temperature = 0.2;
      s.max_tokens = 2048;
      break;
  }
  return s;
}

// --- prompt helpers ----------------------------------------------------------

std::string task_tag(std::string_view task) { return "[task:" + std::string(task) + "]"; }

std::string with_context(std::string_view instructions, const json& context) {
  return std::string(instructions) + "\n\n<context>\n" + context.dump(2) + "\n</context>";
}

std::optional<std::string> find_task(const std::vector<ChatMessage>& messages) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    const ChatMessage& m = *it;
    if (m.role != "system") continue;
    auto pos = m.content.find("[task:");
    if (pos == std::string::npos) continue;
    auto end = m.content.find(']', pos);
    if (end == std::string::npos) continue;
    return m.content.substr(pos + 6, end - pos - 6);
  }
  return std::nullopt;
}

std::optional<json> find_context(const std::vector<ChatMessage>& messages) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role != "user") continue;
    auto open = it->content.find("<context>");
    auto close = it->content.rfind("</context>");
    if (open == std::string::npos || close == std::string::npos || close < open) continue;
    json parsed = json::parse(it->content.substr(open + 9, close - open - 9), nullptr, false);
    if (!parsed.is_discarded()) return parsed;
  }
  return std::nullopt;
}

// --- MockBackend -------------------------------------------------------------

namespace {

std::vector<std::string> reply_list(const json& value) {
  std::vector<std::string> out;
  auto as_text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  if (value.is_array()) {
    for (const auto& v : value) out.push_back(as_text(v));
  } else {
    out.push_back(as_text(value));
  }
  return out;
}

int approx_tokens(std::size_t chars) { return static_cast<int>((chars + 3) / 4); }

}  // namespace

MockBackend::MockBackend(json script, Responder responder) : responder_(std::move(responder)) {
  if (!script.is_object()) throw Error(ErrorCode::invalid_config, "mock script must be an object");
  for (const auto& entry : script.value("entries", json::array())) {
    std::optional<ModelRole> role;
    if (entry.contains("role")) role = model_role_from_string(entry.at("role").get<std::string>());
    std::string hash;
    if (entry.contains("hash")) {
      hash = entry.at("hash").get<std::string>();
    } else if (entry.contains("user_message")) {
      hash = fnv1a_hex(entry.at("user_message").get<std::string>());
    } else {
      throw Error(ErrorCode::invalid_config, "mock entry needs user_message or hash");
    }
    const json& replies = entry.contains("replies") ? entry.at("replies") : entry.at("reply");
    entries_[entry_key(role, hash)] = Entry{reply_list(replies)};
  }
  const json defaults = script.value("defaults", json::object());
  for (const auto& [role, replies] : defaults.items()) {
    role_defaults_[std::string(to_string(model_role_from_string(role)))] = Entry{reply_list(replies)};
  }
  if (script.contains("default")) default_reply_ = reply_list(script.at("default")).front();
}

std::string MockBackend::entry_key(std::optional<ModelRole> role, const std::string& hash) {
  return (role ? std::string(to_string(*role)) : std::string("*")) + "/" + hash;
}

std::string MockBackend::key_for(const BackendRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == "user" && !it->content.starts_with(kRepairPrefix)) {
      return fnv1a_hex(it->content);
    }
  }
  return fnv1a_hex("");
}

void MockBackend::add_reply(std::optional<ModelRole> role, std::string_view user_message,
                            std::vector<std::string> replies) {
  std::lock_guard lock(mu_);
  entries_[entry_key(role, fnv1a_hex(user_message))] = Entry{std::move(replies)};
}

void MockBackend::set_responder(Responder responder) {
  std::lock_guard lock(mu_);
  responder_ = std::move(responder);
}

int MockBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

BackendReply MockBackend::chat(const BackendRequest& request) {
  std::size_t prompt_chars = 0;
  for (const auto& m : request.messages) prompt_chars += m.content.size();

  auto finish = [&](std::string content) {
    BackendReply reply;
    reply.prompt_tokens = approx_tokens(prompt_chars);
    reply.completion_tokens = approx_tokens(content.size());
    reply.content = std::move(content);
    return reply;
  };
  auto take = [](Entry& e) {
    const auto& text = e.replies[std::min(e.next, e.replies.size() - 1)];
    ++e.next;
    return text;
  };

  const std::string hash = key_for(request);
  Responder responder;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    for (auto key : {entry_key(request.role, hash), entry_key(std::nullopt, hash)}) {
      if (auto it = entries_.find(key); it != entries_.end() && !it->second.replies.empty()) {
        return finish(take(it->second));
      }
    }
    responder = responder_;
  }
  if (responder) {
    if (auto text = responder(request)) return finish(std::move(*text));
  }
  std::lock_guard lock(mu_);
  if (auto it = role_defaults_.find(std::string(to_string(request.role)));
      it != role_defaults_.end() && !it->second.replies.empty()) {
    return finish(take(it->second));
  }
  if (default_reply_) return finish(*default_reply_);
  throw Error(ErrorCode::backend_unreachable,
              "mock backend has no reply for role " + std::string(to_string(request.role)) +
                  " key " + hash);
}

// --- LlmGateway --------------------------------------------------------------

class LlmGateway::Limiter {
 public:
  explicit Limiter(int capacity) : available_(std::max(1, capacity)) {}
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

LlmGateway::LlmGateway() = default;
LlmGateway::~LlmGateway() = default;

std::string LlmGateway::register_backend(const json& config, const std::filesystem::path& base_dir) {
  if (!config.is_object()) throw Error(ErrorCode::invalid_config, "backend config must be an object");
  const std::string transport = config.value("transport", std::string{});
  const std::string name = config.value("name", transport);
  if (name.empty()) throw Error(ErrorCode::invalid_config, "backend config needs a name");
  std::shared_ptr<ChatBackend> backend;
  if (transport == "mock") {
    json script = config.value("script", json::object());
    if (config.contains("script_path")) {
      auto path = std::filesystem::path(config.at("script_path").get<std::string>());
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      script = json::parse(read_file(path));
    }
    backend = std::make_shared<MockBackend>(std::move(script));
  } else if (transport == "http") {
    HttpChatBackend::Config http;
    http.endpoint = config.value("endpoint", std::string{});
    http.model = config.value("model", std::string{});
    http.api_key_env = config.value("api_key_env", std::string{});
    http.json_mode = config.value("json_mode", true);
    if (http.endpoint.empty()) throw Error(ErrorCode::invalid_config, "http backend needs an endpoint URL");
    if (http.model.empty()) throw Error(ErrorCode::invalid_config, "http backend needs a model name");
    backend = std::make_shared<HttpChatBackend>(std::move(http));
  } else {
    throw Error(ErrorCode::invalid_config, "unknown transport '" + transport + "'");
  }
  register_backend(name, std::move(backend));
  return name;
}

void LlmGateway::register_backend(const std::string& ref, std::shared_ptr<ChatBackend> backend) {
  std::lock_guard lock(mu_);
  backends_[ref] = std::move(backend);
}

void LlmGateway::configure_role(ModelRole role, RoleSettings settings) {
  std::lock_guard lock(mu_);
  if (!backends_.contains(settings.backend)) {
    throw Error(ErrorCode::invalid_config, "role " + std::string(to_string(role)) +
                                               " routed to unknown backend '" + settings.backend + "'");
  }
  limiters_[role] = std::make_shared<Limiter>(settings.max_concurrency);
  roles_[role] = std::move(settings);
}

void LlmGateway::route_all(const std::string& ref) {
  for (ModelRole role : kAllRoles) {
    RoleSettings settings = default_role_settings(role);
    settings.backend = ref;
    configure_role(role, settings);
  }
}

RoleSettings LlmGateway::role_settings(ModelRole role) const {
  std::lock_guard lock(mu_);
  auto it = roles_.find(role);
  if (it == roles_.end()) {
    throw Error(ErrorCode::invalid_config, "role " + std::string(to_string(role)) + " not configured");
  }
  return it->second;
}

std::shared_ptr<ChatBackend> LlmGateway::backend(const std::string& ref) const {
  std::lock_guard lock(mu_);
  auto it = backends_.find(ref);
  if (it == backends_.end()) throw Error(ErrorCode::invalid_config, "unknown backend '" + ref + "'");
  return it->second;
}

std::shared_ptr<ChatBackend> LlmGateway::backend_for(ModelRole role) const {
  return backend(role_settings(role).backend);
}

void LlmGateway::validate() const {
  for (ModelRole role : kAllRoles) (void)role_settings(role);
  if (backend_for(ModelRole::persona_deep) != backend_for(ModelRole::judge_deep)) {
    throw Error(ErrorCode::invalid_config,
                "persona_deep and judge_deep must share one backend (the judge needs the "
                "generator's context)");
  }
}

ChatExchange LlmGateway::complete(ModelRole role, std::vector<ChatMessage> messages,
                                  const json* schema, const CallObserver& observer) {
  if (messages.empty() || messages.front().role != "system") {
    throw Error(ErrorCode::invalid_config, "chat messages must start with a system message");
  }
  const RoleSettings settings = role_settings(role);
  auto target = backend(settings.backend);
  std::shared_ptr<Limiter> limiter;
  {
    std::lock_guard lock(mu_);
    limiter = limiters_.at(role);
  }

  ChatExchange exchange;
  const auto started = std::chrono::steady_clock::now();
  int transport_failures = 0;
  int schema_failures = 0;
  std::vector<std::string> last_errors;

  while (true) {
    BackendRequest request;
    request.role = role;
    request.model = settings.model;
    request.messages = messages;
    request.temperature = settings.temperature;
    request.max_tokens = settings.max_tokens;
    request.timeout = settings.timeout;
    request.schema = schema;

    BackendReply reply;
    const auto call_start = std::chrono::steady_clock::now();
    limiter->acquire();
    try {
      reply = target->chat(request);
      limiter->release();
    } catch (const Error& e) {
      limiter->release();
      const bool transient = e.code() == ErrorCode::backend_unreachable || e.code() == ErrorCode::timeout;
      if (observer) {
        observer({{"role", to_string(role)}, {"error", e.what()}, {"attempt", transport_failures + 1}});
      }
      if (!transient || target->is_mock() || ++transport_failures > settings.retry_budget) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(100) * (1 << (transport_failures - 1)));
      continue;
    }
    const double call_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - call_start).count();

    exchange.usage.calls += 1;
    exchange.usage.prompt_tokens += reply.prompt_tokens;
    exchange.usage.completion_tokens += reply.completion_tokens;
    exchange.raw_replies.push_back(reply.content);
    if (observer) {
      observer({{"role", to_string(role)},
                {"model", settings.model},
                {"prompt_tokens", reply.prompt_tokens},
                {"completion_tokens", reply.completion_tokens},
                {"latency_ms", call_ms},
                {"attempt", exchange.usage.calls},
                {"finish_reason", reply.finish_reason}});
    }

    if (schema == nullptr) {
      exchange.content = reply.content;
      exchange.finish_reason = reply.finish_reason;
      break;
    }
    json parsed = schema::extract_json(reply.content);
    last_errors = parsed.is_discarded() ? std::vector<std::string>{"reply is not a JSON object"}
                                        : schema::validate(parsed, *schema);
    if (last_errors.empty()) {
      exchange.content = reply.content;
      exchange.finish_reason = reply.finish_reason;
      exchange.parsed = std::move(parsed);
      break;
    }
    if (++schema_failures > settings.retry_budget) {
      throw Error(ErrorCode::schema_violation_exhausted,
                  std::string(to_string(role)) + " produced no valid reply in " +
                      std::to_string(exchange.usage.calls) + " attempts",
                  {{"raw_replies", exchange.raw_replies}, {"last_errors", last_errors}});
    }
    std::string repair = std::string(kRepairPrefix) + " Problems:";
    for (const auto& err : last_errors) repair += "\n- " + err;
    repair += "\nReply with only a JSON object matching this schema:\n" + schema->dump();
    messages.push_back({"assistant", reply.content});
    messages.push_back({"user", repair});
  }

  messages.push_back({"assistant", exchange.content});
  exchange.messages = std::move(messages);
  exchange.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return exchange;
}

void load_gateway_config(LlmGateway& gateway, const json& config,
                         const std::filesystem::path& base_dir) {
  if (!config.is_object() || !config.contains("backends")) {
    throw Error(ErrorCode::invalid_config, "gateway config needs a backends list");
  }
  std::string first;
  for (const auto& backend : config.at("backends")) {
    auto ref = gateway.register_backend(backend, base_dir);
    if (first.empty()) first = ref;
  }
  const json roles = config.value("roles", json::object());
  const json defaults = roles.value("default", json::object());
  for (ModelRole role : kAllRoles) {
    RoleSettings s = default_role_settings(role);
    s.backend = first;
    for (const json* layer : {&defaults, roles.contains(to_string(role)) ? &roles.at(std::string(to_string(role))) : nullptr}) {
      if (layer == nullptr) continue;
      s.backend = layer->value("backend", s.backend);
      s.model = layer->value("model", s.model);
      s.temperature = layer->value("temperature", s.temperature);
      s.max_tokens = layer->value("max_tokens", s.max_tokens);
      if (layer->contains("timeout_ms")) {
        s.timeout = std::chrono::milliseconds(layer->at("timeout_ms").get<long>());
      }
      s.retry_budget = layer->value("retry_budget", s.retry_budget);
      s.max_concurrency = layer->value("max_concurrency", s.max_concurrency);
    }
    gateway.configure_role(role, s);
  }
}

}  // namespace ata
