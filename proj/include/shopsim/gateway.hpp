#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shopsim/episode.hpp"
#include "shopsim/error.hpp"

namespace httplib {
class Server;
}

namespace shopsim {

class CapacityError : public Error {
 public:
  using Error::Error;
};
/// Another request is stepping the same session.
class ConflictError : public Error {
 public:
  using Error::Error;
};
class ExpiredError : public Error {
 public:
  using Error::Error;
};

struct GatewayConfig {
  std::size_t max_sessions = 64;
  std::chrono::seconds idle_timeout{30 * 60};
  /// One "<session_id>.jsonl" per session when set.
  std::filesystem::path trace_dir;
  /// Bearer token; empty disables auth.
  std::string token;
  std::string default_shopper = "scripted";
  std::optional<ChatConfig> chat;

  /// JSON keys: max_sessions, idle_timeout_seconds, trace_dir, token,
  /// default_shopper, chat. SHOPSIM_TOKEN and SHOPSIM_TRACE_DIR override.
  static GatewayConfig load(const std::filesystem::path& path = {});
};

enum class SessionStatus { Live, Terminal, Expired };
std::string_view to_string(SessionStatus s);

struct SessionInfo {
  std::string session_id;
  std::string task_id;
  Scenario scenario = Scenario::SingleTurn;
  std::string created_at;
  SessionStatus status = SessionStatus::Live;
  int step_count = 0;
};

nlohmann::ordered_json to_json(const SessionInfo& s);

struct StepReply {
  Observation observation;
  int step_count = 0;
  bool terminal = false;
  std::optional<RewardBreakdown> reward;
};

nlohmann::ordered_json to_json(const StepReply& r);

/// Thread-safe session registry. Steps on one session are serialized; an
/// overlapping step fails with ConflictError instead of waiting.
class SessionManager {
 public:
  using Ticker = std::function<std::chrono::steady_clock::time_point()>;

  SessionManager(std::shared_ptr<const World> world, GatewayConfig config, Clock clock = system_clock(),
                 Ticker ticker = [] { return std::chrono::steady_clock::now(); });

  struct Created {
    SessionInfo info;
    Observation observation;
  };
  /// Throws NotFoundError (task), StateError (scenario not supported by the
  /// task), CapacityError.
  Created create(const std::string& task_id, Scenario scenario, std::uint64_t seed,
                 const std::string& shopper_backend = {});
  /// Throws NotFoundError, ExpiredError, ConflictError, StateError (already
  /// terminal) and ProtocolError (fatal, step not counted).
  StepReply step(const std::string& session_id, const std::string& raw_action);
  StepReply observation(const std::string& session_id);
  SessionInfo info(const std::string& session_id);
  /// Throws StateError while the session is live.
  EpisodeTrace trace(const std::string& session_id);
  void remove(const std::string& session_id);
  std::vector<SessionInfo> list();

  /// Marks idle live sessions expired and frees their engines.
  std::size_t sweep();
  std::size_t live_count();
  const World& world() const { return *world_; }
  const GatewayConfig& config() const { return config_; }

 private:
  struct Session {
    SessionInfo info;
    std::unique_ptr<Episode> episode;
    std::optional<EpisodeTrace> final_trace;
    std::chrono::steady_clock::time_point last_active;
    std::mutex busy;
  };
  std::shared_ptr<Session> lookup(const std::string& id);

  std::shared_ptr<const World> world_;
  GatewayConfig config_;
  Clock clock_;
  Ticker ticker_;
  std::shared_ptr<ChatBackend> chat_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// HTTP front end. The manager may be attached after listening starts;
/// until then /health reports not_ready and other routes answer 503.
class GatewayServer {
 public:
  explicit GatewayServer(std::string token = {});
  ~GatewayServer();

  void attach(std::shared_ptr<SessionManager> manager);
  /// Blocks until stop(). Returns false if the socket could not be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it; call listen_after_bind() next.
  int bind_any(const std::string& host);
  /// Binds a fixed port; call listen_after_bind() next.
  bool bind(const std::string& host, int port);
  bool listen_after_bind();
  void stop();
  bool ready() const;

 private:
  void routes();
  std::shared_ptr<SessionManager> manager() const;

  std::unique_ptr<httplib::Server> server_;
  std::string token_;
  mutable std::mutex mu_;
  std::shared_ptr<SessionManager> manager_;
};

}  // namespace shopsim
