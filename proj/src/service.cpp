// SPDX-License-Identifier: Apache-2.0
#include "ata/service.hpp"

#include <httplib.h>

#include "ata/error.hpp"
#include "ata/mock_world.hpp"

namespace ata {

namespace fs = std::filesystem;

std::unique_ptr<LlmGateway> make_gateway(const BackendSpec& spec, std::uint64_t seed) {
  auto gateway = std::make_unique<LlmGateway>();
  if (spec.backend_config) {
    json config = json::parse(read_file(*spec.backend_config), nullptr, false);
    if (config.is_discarded()) throw Error(ErrorCode::invalid_config, spec.backend_config->string() + " is not JSON");
    load_gateway_config(*gateway, config, spec.backend_config->parent_path());
  } else if (spec.mock_llm) {
    gateway->register_backend("mock", make_mock_backend(*spec.mock_llm, seed));
    gateway->route_all("mock");
  } else {
    throw Error(ErrorCode::invalid_config, "no model backend: pass a backend config or a mock directory");
  }
  gateway->validate();
  return gateway;
}

std::unique_ptr<SearchBackend> make_search(const std::optional<fs::path>& corpus,
                                           const std::optional<std::string>& endpoint,
                                           const std::string& api_key_env) {
  if (endpoint) return std::make_unique<HttpSearch>(*endpoint, api_key_env);
  if (corpus) return std::make_unique<CorpusSearch>(CorpusSearch::from_file(*corpus));
  return nullptr;
}

AutRegistry make_registry(const std::optional<fs::path>& auts_file) {
  AutRegistry registry = AutRegistry::with_builtins();
  if (auts_file) registry.load_file(*auts_file);
  return registry;
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_config:
    case ErrorCode::domain_error:
      return 400;
    case ErrorCode::unknown_run:
      return 404;
    case ErrorCode::version_conflict:
    case ErrorCode::phase_violation:
    case ErrorCode::precondition:
    case ErrorCode::already_judged:
    case ErrorCode::channel_closed:
      return 409;
    case ErrorCode::registration:
    case ErrorCode::invalid_rubric:
      return 422;
    case ErrorCode::backend_unreachable:
    case ErrorCode::unreachable:
    case ErrorCode::search_unavailable:
      return 502;
    case ErrorCode::timeout:
      return 504;
    default:
      return 500;
  }
}

struct Service::RunSlot {
  RunConfig config;
  std::unique_ptr<LlmGateway> gateway;
  std::unique_ptr<Engine> engine;
  AnswerQueue answers;
  DecisionBoard decisions;
  std::thread worker;
};

class Service::Impl {
 public:
  explicit Impl(Service& owner) : owner_(owner) { routes(); }

  ~Impl() {
    std::map<std::string, std::unique_ptr<RunSlot>> slots;
    {
      std::lock_guard lock(mu_);
      slots.swap(slots_);
    }
    for (auto& [id, slot] : slots) {
      slot->answers.close();
      slot->decisions.close();
      if (slot->worker.joinable()) slot->worker.join();
    }
  }

  httplib::Server server;

 private:
  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const Error& e) {
    json body = {{"error", to_string(e.code())}, {"message", e.what()}};
    if (!e.details().is_null()) body["details"] = e.details();
    send_json(res, http_status_for(e.code()), body);
  }

  static json body_of(const httplib::Request& req) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) throw Error(ErrorCode::invalid_config, "request body is not JSON");
    return body;
  }

  template <typename Handler>
  auto guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
      }
    };
  }

  RunState state_of(const std::string& run_id) {
    if (!owner_.store_->has_run(run_id)) throw Error(ErrorCode::unknown_run, "no run " + run_id);
    return owner_.store_->snapshot(run_id);
  }

  RunSlot* slot_of(const std::string& run_id) {
    std::lock_guard lock(mu_);
    auto it = slots_.find(run_id);
    return it == slots_.end() ? nullptr : it->second.get();
  }

  void routes() {
    server.Get("/auts", guarded([this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& id : owner_.auts_.ids()) {
        const auto& reg = owner_.auts_.get(id);
        list.push_back({{"aut_id", id}, {"display_name", reg.display_name}, {"description", reg.description}});
      }
      send_json(res, 200, list);
    }));

    server.Get("/runs", guarded([this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& id : owner_.store_->run_ids()) {
        const RunState s = owner_.store_->snapshot(id);
        list.push_back({{"run_id", id}, {"aut_ref", s.aut_ref}, {"phase", s.phase}});
      }
      send_json(res, 200, list);
    }));

    server.Post("/runs", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = body_of(req);
      auto slot = std::make_unique<RunSlot>();
      slot->config = body.get<RunConfig>();
      validate(slot->config);
      slot->gateway = make_gateway(owner_.options_.backends, slot->config.seed);
      slot->engine = std::make_unique<Engine>(
          EngineResources{owner_.store_.get(), &owner_.auts_, slot->gateway.get(), owner_.search_.get()});
      const std::string run_id = slot->engine->create(slot->config);
      if (body.contains("answers")) {
        for (const auto& a : body["answers"]) slot->answers.push(a.get<std::string>());
      }
      const bool approve_all = body.value("approve_all", false);
      RunSlot* raw = slot.get();
      {
        std::lock_guard lock(mu_);
        slots_[run_id] = std::move(slot);
      }
      raw->worker = std::thread([raw, run_id, approve_all] {
        ScriptedApprovals all;
        Interaction interaction{&raw->answers, approve_all ? static_cast<ApprovalChannel*>(&all) : &raw->decisions};
        try {
          raw->engine->execute(run_id, raw->config, interaction);
        } catch (const std::exception&) {
          // Recorded in the run's state and event log.
        }
      });
      send_json(res, 201, {{"run_id", run_id}});
    }));

    server.Get(R"(/runs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string run_id = req.matches[1];
      if (!owner_.store_->has_run(run_id)) throw Error(ErrorCode::unknown_run, "no run " + run_id);
      const VersionedState v = owner_.store_->snapshot_versioned(run_id);
      send_json(res, 200, {{"version", v.version}, {"state", *v.state}});
    }));

    server.Get(R"(/runs/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string run_id = req.matches[1];
      if (!owner_.store_->has_run(run_id)) {
        send_json(res, 404, {{"error", "unknown-run"}, {"message", "no run " + run_id}});
        return;
      }
      std::uint64_t from = 0;
      if (req.has_param("from")) from = std::stoull(req.get_param_value("from"));
      const bool follow = !req.has_param("follow") || req.get_param_value("follow") != "0";
      auto sub = std::shared_ptr<Subscription>(owner_.store_->subscribe(run_id, from).release());
      StateStore* store = owner_.store_.get();
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [sub, store, run_id, follow](std::size_t, httplib::DataSink& sink) {
            int idle_ms = 0;
            while (true) {
              auto event = sub->next(std::chrono::milliseconds(100));
              if (event) {
                idle_ms = 0;
                const std::string frame = "id: " + std::to_string(event->seq) + "\nevent: " +
                                          json(event->kind).get<std::string>() + "\ndata: " + json(*event).dump() +
                                          "\n\n";
                if (!sink.write(frame.data(), frame.size())) return false;
                continue;
              }
              const Phase phase = store->snapshot(run_id).phase;
              if (!follow || phase == Phase::done || phase == Phase::failed || sub->closed()) {
                if (sub->drain().empty()) {
                  sink.done();
                  return true;
                }
              }
              idle_ms += 100;
              if (idle_ms >= 15000) {
                idle_ms = 0;
                static const std::string ping = ": keep-alive\n\n";
                if (!sink.write(ping.data(), ping.size())) return false;
              }
            }
          });
    });

    server.Post(R"(/runs/([^/]+)/answers)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string run_id = req.matches[1];
      const RunState s = state_of(run_id);
      RunSlot* slot = slot_of(run_id);
      if (s.phase != Phase::interviewing || !slot) {
        throw Error(ErrorCode::phase_violation, "run is " + std::string(to_string(s.phase)) + ", not interviewing");
      }
      const json body = body_of(req);
      if (!body.contains("answer") || !body["answer"].is_string()) {
        throw Error(ErrorCode::invalid_config, "body needs a string 'answer'");
      }
      slot->answers.push(body["answer"].get<std::string>());
      send_json(res, 202, {{"accepted", true}, {"question", s.pending_question ? json(*s.pending_question) : json()}});
    }));

    server.Post(R"(/runs/([^/]+)/weaknesses/([^/]+)/decision)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string run_id = req.matches[1];
                  const std::string wid = req.matches[2];
                  const RunState s = state_of(run_id);
                  RunSlot* slot = slot_of(run_id);
                  if (s.phase != Phase::awaiting_approval || !slot) {
                    throw Error(ErrorCode::phase_violation,
                                "run is " + std::string(to_string(s.phase)) + ", not awaiting_approval");
                  }
                  if (!s.find_weakness(wid)) throw Error(ErrorCode::unknown_run, "no weakness " + wid);
                  slot->decisions.post(wid, decision_from_json(body_of(req)));
                  send_json(res, 202, {{"accepted", true}});
                }));

    server.Get(R"(/runs/([^/]+)/scenarios/([^/]+))",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string run_id = req.matches[1];
                 const std::string sid = req.matches[2];
                 const RunState s = state_of(run_id);
                 const TestScenario* sc = s.find_scenario(sid);
                 if (!sc) throw Error(ErrorCode::unknown_run, "no scenario " + sid);
                 const fs::path file = owner_.store_->run_dir(run_id) / "transcripts" / (sid + ".json");
                 std::error_code ec;
                 if (owner_.store_->persistent() && fs::exists(file, ec)) {
                   res.status = 200;
                   res.set_content(read_file(file), "application/json");
                   return;
                 }
                 send_json(res, 200, transcript_document(*sc, {}));
               }));

    server.Get(R"(/runs/([^/]+)/report)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string run_id = req.matches[1];
      const RunState s = state_of(run_id);
      if (!s.report) throw Error(ErrorCode::precondition, "no report yet; run is " + std::string(to_string(s.phase)));
      if (req.has_param("format") && req.get_param_value("format") == "markdown") {
        res.status = 200;
        res.set_content(render_markdown(*s.report, s), "text/markdown");
        return;
      }
      send_json(res, 200, *s.report);
    }));

    server.Post(R"(/runs/([^/]+)/qa)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string run_id = req.matches[1];
      const RunState s = state_of(run_id);
      const json body = body_of(req);
      if (!body.contains("question") || !body["question"].is_string()) {
        throw Error(ErrorCode::invalid_config, "body needs a string 'question'");
      }
      RunSlot* slot = slot_of(run_id);
      std::unique_ptr<LlmGateway> own;
      LlmGateway* gateway = slot ? slot->gateway.get() : nullptr;
      if (!gateway) {
        own = make_gateway(owner_.options_.backends, s.settings.seed);
        gateway = own.get();
      }
      std::lock_guard lock(qa_mu_);
      const ModelClient model(*gateway, [this, run_id](const json& record) {
        owner_.store_->append_event(run_id, "reporter", EventKind::model_call, record);
      });
      const std::string answer = report_qa(*owner_.store_, run_id, body["question"].get<std::string>(), model);
      send_json(res, 200, {{"answer", answer}});
    }));
  }

  Service& owner_;
  std::mutex mu_;
  std::mutex qa_mu_;
  std::map<std::string, std::unique_ptr<RunSlot>> slots_;
};

Service::Service(ServiceOptions options) : options_(std::move(options)), auts_(make_registry(options_.auts_file)) {
  fs::create_directories(options_.runs_dir);
  store_ = std::make_unique<StateStore>(StoreOptions{options_.runs_dir, {}});
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(options_.runs_dir, ec)) {
    if (entry.is_directory() && fs::exists(entry.path() / "events.ndjson")) {
      try {
        store_->open_run(entry.path().filename().string());
      } catch (const std::exception&) {
        // Unreadable leftovers are skipped; the service still starts.
      }
    }
  }
  search_ = make_search(options_.search_corpus, options_.search_endpoint);
  make_gateway(options_.backends, 0);  // fail fast on a bad backend spec
  impl_ = std::make_unique<Impl>(*this);
}

Service::~Service() { stop(); }

int Service::start() {
  if (options_.port == 0) {
    port_ = impl_->server.bind_to_any_port(options_.host);
  } else {
    port_ = impl_->server.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ <= 0) throw Error(ErrorCode::invalid_config, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  server_thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void Service::run() {
  if (!impl_->server.listen(options_.host, options_.port)) {
    throw Error(ErrorCode::invalid_config, "cannot listen on " + options_.host + ":" + std::to_string(options_.port));
  }
}

void Service::stop() {
  if (impl_) impl_->server.stop();
  if (server_thread_.joinable()) server_thread_.join();
}

}  // namespace ata
