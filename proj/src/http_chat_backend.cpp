// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>

#include <httplib.h>

#include "ata/error.hpp"
#include "ata/llm_gateway.hpp"

namespace ata {
namespace {

// "https://host:port/path" -> {"https://host:port", "/path"}
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::invalid_config, "endpoint '" + url + "' is not an absolute URL");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpChatBackend::HttpChatBackend(Config config) : config_(std::move(config)) {
  std::tie(scheme_host_, path_) = split_url(config_.endpoint);
}

BackendReply HttpChatBackend::chat(const BackendRequest& request) {
  httplib::Client client(scheme_host_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout).count();
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout).count() % 1000000;
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  json body = {{"model", request.model.empty() ? config_.model : request.model},
               {"messages", request.messages},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens}};
  if (request.schema != nullptr && config_.json_mode) {
    body["response_format"] = {{"type", "json_object"}};
  }

  auto result = client.Post(path_, headers, body.dump(), "application/json");
  if (!result) {
    const auto err = result.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write) {
      throw Error(ErrorCode::timeout, "chat endpoint " + config_.endpoint + ": " + httplib::to_string(err));
    }
    throw Error(ErrorCode::backend_unreachable,
                "chat endpoint " + config_.endpoint + ": " + httplib::to_string(err));
  }
  if (result->status == 429 || result->status >= 500) {
    throw Error(ErrorCode::backend_unreachable,
                "chat endpoint returned HTTP " + std::to_string(result->status));
  }
  if (result->status != 200) {
    throw Error(ErrorCode::invalid_config, "chat endpoint returned HTTP " + std::to_string(result->status) +
                                               ": " + result->body.substr(0, 512));
  }
  json response = json::parse(result->body, nullptr, false);
  if (response.is_discarded() || !response.contains("choices") || response["choices"].empty()) {
    throw Error(ErrorCode::backend_unreachable, "chat endpoint returned an unexpected body");
  }
  const json& choice = response["choices"][0];
  BackendReply reply;
  const json& content = choice["message"]["content"];
  reply.content = content.is_string() ? content.get<std::string>() : std::string{};
  reply.finish_reason = choice.value("finish_reason", std::string("stop"));
  if (response.contains("usage")) {
    reply.prompt_tokens = response["usage"].value("prompt_tokens", 0);
    reply.completion_tokens = response["usage"].value("completion_tokens", 0);
  }
  return reply;
}

}  // namespace ata
