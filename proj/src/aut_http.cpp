// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include "ata/aut_adapter.hpp"
#include "ata/error.hpp"

namespace ata::detail {
namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::registration, "endpoint '" + url + "' is not an absolute URL");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

void apply_timeouts(httplib::Client& client, std::chrono::milliseconds budget) {
  const auto sec = std::chrono::duration_cast<std::chrono::seconds>(budget).count();
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(budget).count() % 1000000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
}

/// POST {session_id, message} -> {reply}
class HttpSession : public AutSession {
 public:
  HttpSession(const AutRegistration& reg, std::string session_id)
      : session_id_(std::move(session_id)), timeout_(reg.timeout) {
    std::tie(base_, path_) = split_url(reg.endpoint);
    httplib::Client probe(base_);
    apply_timeouts(probe, std::min(timeout_, std::chrono::milliseconds(5000)));
    // Any HTTP answer, even 404 or 405, proves the agent is reachable.
    if (!probe.Get(path_)) throw Error(ErrorCode::unreachable, reg.aut_id + " at " + reg.endpoint);
  }

  const std::string& session_id() const override { return session_id_; }

  AutTurnResult send(const std::string& user_message) override {
    const auto start = std::chrono::steady_clock::now();
    auto finish = [&](AutTurnResult r) {
      r.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      return r;
    };
    httplib::Client client(base_);
    apply_timeouts(client, timeout_);
    const json body = {{"session_id", session_id_}, {"message", user_message}};
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) {
      if (res.error() == httplib::Error::Read || res.error() == httplib::Error::ConnectionTimeout) {
        return finish({std::nullopt, TurnStatus::timeout, 0});
      }
      return finish({std::nullopt, TurnStatus::crash, 0});
    }
    if (res->status >= 500) return finish({std::nullopt, TurnStatus::crash, 0});
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("reply") || !reply["reply"].is_string() ||
        reply["reply"].get_ref<const std::string&>().empty()) {
      return finish({std::string{}, TurnStatus::null_reply, 0});
    }
    return finish({reply["reply"].get<std::string>(), TurnStatus::ok, 0});
  }

 private:
  std::string session_id_;
  std::chrono::milliseconds timeout_;
  std::string base_;
  std::string path_;
};

}  // namespace

std::unique_ptr<AutSession> open_http_session(const AutRegistration& reg,
                                              const std::string& session_key) {
  return std::make_unique<HttpSession>(reg, session_key);
}

}  // namespace ata::detail
