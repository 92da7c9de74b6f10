// SPDX-License-Identifier: Apache-2.0
//
// Runtime wiring shared by the CLI and the HTTP service, and the service
// itself: JSON endpoints over one Engine, interview and approval inputs as
// phase-gated POSTs, live events as a server-sent-event stream.
#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "ata/pipeline.hpp"

namespace ata {

/// Where model replies come from: a gateway config file, or the mock world
/// (optionally with `<dir>/script.json` overrides).
struct BackendSpec {
  std::optional<std::filesystem::path> backend_config;
  std::optional<std::filesystem::path> mock_llm;
};

/// Throws invalid_config when neither source is given.
std::unique_ptr<LlmGateway> make_gateway(const BackendSpec& spec, std::uint64_t seed);

/// Keyword corpus from a file, or an HTTP search API; nullptr when neither.
std::unique_ptr<SearchBackend> make_search(const std::optional<std::filesystem::path>& corpus,
                                           const std::optional<std::string>& endpoint,
                                           const std::string& api_key_env = {});

/// Built-in agents plus those in `auts_file`, if any.
AutRegistry make_registry(const std::optional<std::filesystem::path>& auts_file);

/// HTTP status for an error code.
int http_status_for(ErrorCode code);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path runs_dir = "runs";
  std::optional<std::filesystem::path> auts_file;
  BackendSpec backends;
  std::optional<std::filesystem::path> search_corpus;
  std::optional<std::string> search_endpoint;
};

class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const { return port_; }

  StateStore& store() { return *store_; }

 private:
  struct RunSlot;
  class Impl;

  ServiceOptions options_;
  std::unique_ptr<StateStore> store_;
  AutRegistry auts_;
  std::unique_ptr<SearchBackend> search_;
  std::unique_ptr<Impl> impl_;
  std::thread server_thread_;
  int port_ = 0;
};

}  // namespace ata
