#include "shopsim/gateway.hpp"

#include <cstdlib>
#include <fstream>

#include <httplib.h>

namespace shopsim {

using json = nlohmann::ordered_json;

GatewayConfig GatewayConfig::load(const std::filesystem::path& path) {
  GatewayConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("gateway config", path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(e.what(), 0, "gateway config");
    }
    c.max_sessions = j.value("max_sessions", c.max_sessions);
    c.idle_timeout = std::chrono::seconds(j.value("idle_timeout_seconds", static_cast<long>(c.idle_timeout.count())));
    c.trace_dir = j.value("trace_dir", std::string());
    c.token = j.value("token", std::string());
    c.default_shopper = j.value("default_shopper", c.default_shopper);
    if (j.contains("chat")) {
      ChatConfig chat;
      const auto& cj = j["chat"];
      chat.base_url = cj.value("base_url", chat.base_url);
      chat.model = cj.value("model", chat.model);
      chat.api_key = cj.value("api_key", chat.api_key);
      chat.timeout_seconds = cj.value("timeout_seconds", chat.timeout_seconds);
      chat.max_retries = cj.value("max_retries", chat.max_retries);
      chat.backoff_ms = cj.value("backoff_ms", chat.backoff_ms);
      chat.apply_env();
      c.chat = chat;
    }
  }
  if (const char* v = std::getenv("SHOPSIM_TOKEN"); v && *v) c.token = v;
  if (const char* v = std::getenv("SHOPSIM_TRACE_DIR"); v && *v) c.trace_dir = v;
  if (!c.chat && std::getenv("SHOPSIM_LLM_BASE_URL")) c.chat = ChatConfig::load();
  return c;
}

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Live: return "live";
    case SessionStatus::Terminal: return "terminal";
    case SessionStatus::Expired: return "expired";
  }
  return "live";
}

json to_json(const SessionInfo& s) {
  json j;
  j["session_id"] = s.session_id;
  j["task_id"] = s.task_id;
  j["scenario"] = std::string(to_string(s.scenario));
  j["created_at"] = s.created_at;
  j["status"] = std::string(to_string(s.status));
  j["step_count"] = s.step_count;
  return j;
}

json to_json(const StepReply& r) {
  json j;
  j["observation"] = to_json(r.observation);
  j["step_count"] = r.step_count;
  j["terminal"] = r.terminal;
  if (r.reward) j["reward"] = to_json(*r.reward);
  return j;
}

SessionManager::SessionManager(std::shared_ptr<const World> world, GatewayConfig config, Clock clock, Ticker ticker)
    : world_(std::move(world)), config_(std::move(config)), clock_(std::move(clock)), ticker_(std::move(ticker)) {
  if (config_.chat) chat_ = std::make_shared<HttpChatBackend>(*config_.chat);
  if (!config_.trace_dir.empty()) std::filesystem::create_directories(config_.trace_dir);
}

std::size_t SessionManager::sweep() {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  const auto now = ticker_();
  for (auto& [_, s] : sessions_) {
    if (s->info.status != SessionStatus::Live) continue;
    std::unique_lock busy(s->busy, std::try_to_lock);
    if (!busy || !s->episode) continue;
    if (now - s->last_active < config_.idle_timeout) continue;
    s->info.status = SessionStatus::Expired;
    s->final_trace = s->episode->trace();
    s->episode.reset();
    ++n;
  }
  return n;
}

std::size_t SessionManager::live_count() {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [_, s] : sessions_) n += s->info.status == SessionStatus::Live;
  return n;
}

std::shared_ptr<SessionManager::Session> SessionManager::lookup(const std::string& id) {
  sweep();
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("session", id);
  return it->second;
}

SessionManager::Created SessionManager::create(const std::string& task_id, Scenario scenario, std::uint64_t seed,
                                               const std::string& shopper_backend) {
  const auto* task = world_->tasks().find(task_id);
  if (!task) throw NotFoundError("task", task_id);
  if (!task->supports(scenario)) {
    throw ValidationError("task " + task_id + " does not support scenario " + std::string(to_string(scenario)), 0,
                          "scenario");
  }
  sweep();
  auto session = std::make_shared<Session>();
  std::unique_lock busy(session->busy);
  {
    std::lock_guard lock(mu_);
    std::size_t live = 0;
    for (const auto& [_, s] : sessions_) live += s->info.status == SessionStatus::Live;
    if (live >= config_.max_sessions) {
      throw CapacityError("session capacity " + std::to_string(config_.max_sessions) + " reached");
    }
    char id[24];
    std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(next_id_++));
    session->info = {id, task_id, scenario, clock_(), SessionStatus::Live, 0};
    session->last_active = ticker_();
    sessions_.emplace(id, session);
  }
  try {
    EpisodeOptions o;
    o.scenario = scenario;
    o.seed = seed;
    o.shopper_backend = shopper_backend.empty() ? config_.default_shopper : shopper_backend;
    o.chat = chat_;
    o.session_id = session->info.session_id;
    o.clock = clock_;
    std::unique_ptr<TraceSink> sink;
    if (!config_.trace_dir.empty()) {
      sink = std::make_unique<FileTraceSink>(config_.trace_dir / (session->info.session_id + ".jsonl"));
    }
    session->episode = std::make_unique<Episode>(*world_, *task, o, std::move(sink));
    auto obs = session->episode->reset();
    return {session->info, std::move(obs)};
  } catch (...) {
    std::lock_guard lock(mu_);
    sessions_.erase(session->info.session_id);
    throw;
  }
}

StepReply SessionManager::step(const std::string& session_id, const std::string& raw_action) {
  auto s = lookup(session_id);
  std::unique_lock busy(s->busy, std::try_to_lock);
  if (!busy) throw ConflictError("session " + session_id + " is busy with another step");
  if (s->info.status == SessionStatus::Expired) throw ExpiredError("session " + session_id + " expired");
  if (s->info.status == SessionStatus::Terminal) throw StateError("session " + session_id + " is already terminal");
  s->last_active = ticker_();
  auto r = s->episode->step_text(raw_action);
  StepReply reply{std::move(r.observation), s->episode->steps(), r.terminal, std::nullopt};
  s->info.step_count = reply.step_count;
  if (r.terminal) {
    reply.reward = s->episode->reward();
    s->info.status = SessionStatus::Terminal;
    s->final_trace = s->episode->trace();
  }
  return reply;
}

StepReply SessionManager::observation(const std::string& session_id) {
  auto s = lookup(session_id);
  std::lock_guard busy(s->busy);
  if (s->info.status == SessionStatus::Expired) throw ExpiredError("session " + session_id + " expired");
  StepReply reply{s->episode->last_observation(), s->episode->steps(), s->episode->terminal(), std::nullopt};
  if (reply.terminal) reply.reward = s->episode->reward();
  return reply;
}

SessionInfo SessionManager::info(const std::string& session_id) {
  auto s = lookup(session_id);
  std::lock_guard busy(s->busy);
  return s->info;
}

EpisodeTrace SessionManager::trace(const std::string& session_id) {
  auto s = lookup(session_id);
  std::lock_guard busy(s->busy);
  if (s->info.status == SessionStatus::Live) throw StateError("trace of live session " + session_id + " is not available yet");
  return *s->final_trace;
}

void SessionManager::remove(const std::string& session_id) {
  auto s = lookup(session_id);
  std::unique_lock busy(s->busy, std::try_to_lock);
  if (!busy) throw ConflictError("session " + session_id + " is busy with another step");
  std::lock_guard lock(mu_);
  sessions_.erase(session_id);
}

std::vector<SessionInfo> SessionManager::list() {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [_, s] : sessions_) all.push_back(s);
  }
  std::vector<SessionInfo> out;
  for (const auto& s : all) {
    std::lock_guard busy(s->busy);
    out.push_back(s->info);
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                json extra = json::object()) {
  json err{{"code", code}, {"message", message}};
  for (auto& [k, v] : extra.items()) err[k] = v;
  send_json(res, status, json{{"error", err}});
}

/// Runs `fn`, mapping library exceptions onto HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    send_error(res, 404, "not_found", e.what(), {{"kind", e.kind()}, {"id", e.id()}});
  } catch (const ExpiredError& e) {
    send_error(res, 410, "expired", e.what());
  } catch (const ConflictError& e) {
    send_error(res, 409, "conflict", e.what());
  } catch (const StateError& e) {
    send_error(res, 409, "invalid_state", e.what());
  } catch (const ProtocolError& e) {
    send_error(res, 422, "protocol_error", e.what(), {{"raw", e.raw()}});
  } catch (const CapacityError& e) {
    send_error(res, 429, "capacity", e.what());
  } catch (const ValidationError& e) {
    send_error(res, 400, "invalid_request", e.what());
  } catch (const BackendError& e) {
    send_error(res, 502, "backend_error", e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, "invalid_request", std::string("bad JSON body: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

}  // namespace

GatewayServer::GatewayServer(std::string token) : server_(std::make_unique<httplib::Server>()), token_(std::move(token)) {
  routes();
}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::attach(std::shared_ptr<SessionManager> manager) {
  std::lock_guard lock(mu_);
  manager_ = std::move(manager);
}

std::shared_ptr<SessionManager> GatewayServer::manager() const {
  std::lock_guard lock(mu_);
  return manager_;
}

bool GatewayServer::ready() const { return manager() != nullptr; }

bool GatewayServer::listen(const std::string& host, int port) { return server_->listen(host, port); }
int GatewayServer::bind_any(const std::string& host) { return server_->bind_to_any_port(host); }
bool GatewayServer::bind(const std::string& host, int port) { return server_->bind_to_port(host, port); }
bool GatewayServer::listen_after_bind() { return server_->listen_after_bind(); }
void GatewayServer::stop() {
  if (server_) server_->stop();
}

void GatewayServer::routes() {
  auto& srv = *server_;
  srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (token_.empty()) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + token_) return httplib::Server::HandlerResponse::Unhandled;
    send_error(res, 401, "unauthorized", "missing or wrong bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });

  // every route except /health needs the manager
  auto with_manager = [this](auto handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      auto m = manager();
      if (!m) {
        send_error(res, 503, "not_ready", "catalog and index are still loading");
        return;
      }
      guarded(res, [&] { handler(*m, req, res); });
    };
  };

  srv.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    auto m = manager();
    json j;
    j["status"] = m ? "ok" : "not_ready";
    j["version"] = kVersion;
    if (m) {
      j["catalog"] = {{"name", m->world().catalog().name()}, {"products", m->world().catalog().size()}};
      j["tasks"] = m->world().tasks().tasks.size();
      j["live_sessions"] = m->live_count();
    }
    send_json(res, m ? 200 : 503, j);
  });

  srv.Post("/sessions", with_manager([](SessionManager& m, const httplib::Request& req, httplib::Response& res) {
             const auto body = json::parse(req.body);
             if (!body.contains("task_id")) throw ValidationError("missing field", 0, "task_id");
             const auto scenario = parse_scenario(body.value("scenario", std::string("single_turn")));
             const auto created = m.create(body.at("task_id").get<std::string>(), scenario,
                                           body.value("seed", std::uint64_t{0}), body.value("shopper_backend", std::string()));
             auto j = to_json(created.info);
             j["observation"] = to_json(created.observation);
             j["terminal"] = false;
             send_json(res, 201, j);
           }));

  srv.Post(R"(/sessions/([^/]+)/step)",
           with_manager([](SessionManager& m, const httplib::Request& req, httplib::Response& res) {
             const auto body = json::parse(req.body);
             if (!body.contains("action")) throw ValidationError("missing field", 0, "action");
             auto j = to_json(m.step(req.matches[1], body.at("action").get<std::string>()));
             j["session_id"] = std::string(req.matches[1]);
             send_json(res, 200, j);
           }));

  srv.Get(R"(/sessions/([^/]+)/observation)",
          with_manager([](SessionManager& m, const httplib::Request& req, httplib::Response& res) {
            auto j = to_json(m.observation(req.matches[1]));
            j["session_id"] = std::string(req.matches[1]);
            send_json(res, 200, j);
          }));

  srv.Get(R"(/sessions/([^/]+)/trace)",
          with_manager([](SessionManager& m, const httplib::Request& req, httplib::Response& res) {
            res.status = 200;
            res.set_content(m.trace(req.matches[1]).to_jsonl(), "application/x-ndjson");
          }));

  srv.Get(R"(/sessions/([^/]+))", with_manager([](SessionManager& m, const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, to_json(m.info(req.matches[1])));
          }));

  srv.Delete(R"(/sessions/([^/]+))",
             with_manager([](SessionManager& m, const httplib::Request& req, httplib::Response& res) {
               m.remove(req.matches[1]);
               res.status = 204;
             }));

  srv.Get("/tasks", with_manager([](SessionManager& m, const httplib::Request& req, httplib::Response& res) {
            std::optional<Scenario> scenario;
            std::optional<Split> split;
            if (req.has_param("scenario")) scenario = parse_scenario(req.get_param_value("scenario"));
            if (req.has_param("split")) split = parse_split(req.get_param_value("split"));
            const auto domain = req.get_param_value("domain");
            json tasks = json::array();
            for (const auto& t : m.world().tasks().tasks) {
              if (scenario && !t.supports(*scenario)) continue;
              if (split && t.split != *split) continue;
              if (!domain.empty() && t.domain() != domain) continue;
              tasks.push_back(to_json(t));
            }
            send_json(res, 200, json{{"count", tasks.size()}, {"tasks", tasks}});
          }));
}

}  // namespace shopsim
