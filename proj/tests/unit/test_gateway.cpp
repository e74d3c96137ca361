#include <doctest.h>

#include <atomic>
#include <condition_variable>
#include <future>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "shopsim/eval.hpp"
#include "shopsim/gateway.hpp"

using namespace shopsim;
using nlohmann::ordered_json;

namespace {

std::shared_ptr<const World> world() {
  static const auto w = [] {
    auto c = generate_catalog(1, GenerationSpec::preset("tiny"));
    auto t = generate_tasks(c, 7, 12, {0.25});
    return std::make_shared<const World>(std::move(c), std::move(t));
  }();
  return w;
}

const Task& plain_task() {
  for (const auto& t : world()->tasks().tasks) {
    if (!t.personalized()) return t;
  }
  FAIL("no plain task");
  throw;
}

/// Gateway on an ephemeral port, torn down on scope exit.
class Running {
 public:
  explicit Running(std::string token = {}) : server_(std::move(token)) {
    port_ = server_.bind_any("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(10, 0);
    for (int i = 0; i < 100 && !client_->Get("/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }
  GatewayServer& server() { return server_; }
  httplib::Client& http() { return *client_; }

  httplib::Result post(const std::string& path, const ordered_json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }
  ordered_json create(const std::string& task, const std::string& scenario = "single_turn") {
    auto r = post("/sessions", {{"task_id", task}, {"scenario", scenario}, {"seed", 3}});
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return ordered_json::parse(r->body);
  }

 private:
  GatewayServer server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

std::shared_ptr<SessionManager> manager(GatewayConfig cfg = {}, SessionManager::Ticker ticker = nullptr) {
  if (!ticker) ticker = [] { return std::chrono::steady_clock::now(); };
  return std::make_shared<SessionManager>(world(), std::move(cfg), fixed_clock(), std::move(ticker));
}

}  // namespace

TEST_SUITE("gateway") {

TEST_CASE("health before and after attach") {
  Running g;
  auto r = g.http().Get("/health");
  REQUIRE(r);
  CHECK(r->status == 503);
  CHECK(ordered_json::parse(r->body)["status"] == "not_ready");
  r = g.http().Get("/tasks");
  CHECK(r->status == 503);
  g.server().attach(manager());
  r = g.http().Get("/health");
  CHECK(r->status == 200);
  const auto j = ordered_json::parse(r->body);
  CHECK(j["status"] == "ok");
  CHECK(j["tasks"] == 12);
}

TEST_CASE("session lifecycle over HTTP") {
  Running g;
  g.server().attach(manager());
  const auto& task = plain_task();
  const auto created = g.create(task.task_id);
  const std::string id = created["session_id"];
  CHECK(created["observation"]["text"].get<std::string>().rfind("WebShop [SEP] Instruction:", 0) == 0);
  CHECK(created["status"] == "live");

  OraclePolicy oracle;
  oracle.begin(task, Scenario::SingleTurn, 3, nullptr);
  auto obs = observation_from_json(created["observation"]);
  ordered_json last;
  for (int i = 0; i < 20; ++i) {
    auto r = g.post("/sessions/" + id + "/step", {{"action", oracle.act(obs, {})}});
    REQUIRE(r);
    REQUIRE(r->status == 200);
    last = ordered_json::parse(r->body);
    obs = observation_from_json(last["observation"]);
    if (last["terminal"] == true) break;
  }
  REQUIRE(last["terminal"] == true);
  CHECK(last["reward"]["r_succ"] == 1);

  auto r = g.post("/sessions/" + id + "/step", {{"action", "click[buy now]"}});
  CHECK(r->status == 409);

  r = g.http().Get("/sessions/" + id + "/trace");
  REQUIRE(r->status == 200);
  std::istringstream in(r->body);
  const auto trace = EpisodeTrace::from_jsonl(in);
  CHECK(to_json(rescore(trace)) == last["reward"]);
  CHECK(replay_trace(*world(), trace).ok());

  r = g.http().Get("/sessions/" + id);
  CHECK(ordered_json::parse(r->body)["status"] == "terminal");
  r = g.http().Delete("/sessions/" + id);
  CHECK(r->status == 204);
  r = g.http().Get("/sessions/" + id);
  CHECK(r->status == 404);
}

TEST_CASE("error statuses") {
  GatewayConfig cfg;
  cfg.max_sessions = 2;
  Running g;
  g.server().attach(manager(cfg));

  auto r = g.post("/sessions", {{"task_id", "t99999"}});
  REQUIRE(r);
  CHECK(r->status == 404);
  CHECK(ordered_json::parse(r->body)["error"]["id"] == "t99999");
  CHECK(r->body.find("t99999") != std::string::npos);

  r = g.post("/sessions", {{"scenario", "single_turn"}});
  CHECK(r->status == 400);
  r = g.http().Post("/sessions", "{not json", "application/json");
  CHECK(r->status == 400);

  const auto a = g.create(plain_task().task_id);
  const std::string id = a["session_id"];
  r = g.post("/sessions/" + id + "/step", {{"action", "Action_type: ask_shopper\nAction_content: What is your budget?"}});
  CHECK(r->status == 422);
  CHECK(ordered_json::parse(r->body)["error"]["raw"].get<std::string>().find("ask_shopper") != std::string::npos);
  CHECK(ordered_json::parse(g.http().Get("/sessions/" + id)->body)["step_count"] == 0);

  r = g.http().Get("/sessions/" + id + "/trace");
  CHECK(r->status == 409);

  g.create(plain_task().task_id);
  r = g.post("/sessions", {{"task_id", plain_task().task_id}});
  CHECK(r->status == 429);
}

TEST_CASE("bearer token") {
  Running g("sekret");
  g.server().attach(manager());
  auto r = g.http().Get("/tasks");
  CHECK(r->status == 401);
  httplib::Headers h{{"Authorization", "Bearer wrong"}};
  CHECK(g.http().Get("/tasks", h)->status == 401);
  h = {{"Authorization", "Bearer sekret"}};
  CHECK(g.http().Get("/tasks", h)->status == 200);
}

TEST_CASE("task listing filters") {
  Running g;
  g.server().attach(manager());
  const auto all = ordered_json::parse(g.http().Get("/tasks")->body);
  CHECK(all["count"] == 12);
  const auto pers = ordered_json::parse(g.http().Get("/tasks?scenario=multi_turn_pers")->body);
  std::size_t expected = 0;
  for (const auto& t : world()->tasks().tasks) expected += t.personalized();
  CHECK(pers["count"] == expected);
  for (const auto& t : pers["tasks"]) CHECK(t.contains("profile_ref"));
  CHECK(g.http().Get("/tasks?scenario=nope")->status == 400);
}

TEST_CASE("idle sessions expire") {
  auto now = std::make_shared<std::atomic<long>>(0);
  GatewayConfig cfg;
  cfg.idle_timeout = std::chrono::seconds(60);
  auto m = manager(cfg, [now] { return std::chrono::steady_clock::time_point(std::chrono::seconds(now->load())); });
  Running g;
  g.server().attach(m);
  const auto a = g.create(plain_task().task_id);
  const std::string id = a["session_id"];
  now->store(30);
  CHECK(g.post("/sessions/" + id + "/step", {{"action", "search[anything]"}})->status == 200);
  now->store(89);
  CHECK(g.http().Get("/sessions/" + id + "/observation")->status == 200);
  now->store(91);
  auto r = g.post("/sessions/" + id + "/step", {{"action", "search[anything]"}});
  CHECK(r->status == 410);
  CHECK(ordered_json::parse(g.http().Get("/sessions/" + id)->body)["status"] == "expired");
  CHECK(m->live_count() == 0);
  CHECK(g.http().Get("/sessions/" + id + "/trace")->status == 200);
}

TEST_CASE("overlapping steps on one session conflict") {
  // completion server that holds the second request until released
  std::mutex mu;
  std::condition_variable cv;
  bool release = false;
  std::atomic<int> calls{0};
  std::promise<void> entered;
  httplib::Server chat;
  chat.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 1) {
      entered.set_value();
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return release; });
    }
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"I want a jacket."}}]})", "application/json");
  });
  const int chat_port = chat.bind_to_any_port("127.0.0.1");
  std::thread chat_thread([&] { chat.listen_after_bind(); });
  chat.wait_until_ready();

  GatewayConfig cfg;
  ChatConfig cc;
  cc.base_url = "http://127.0.0.1:" + std::to_string(chat_port) + "/v1";
  cc.model = "mock";
  cfg.chat = cc;
  Running g;
  g.server().attach(manager(cfg));
  auto r = g.post("/sessions", {{"task_id", plain_task().task_id}, {"scenario", "multi_turn"}, {"shopper_backend", "llm"}});
  REQUIRE(r->status == 201);
  const std::string id = ordered_json::parse(r->body)["session_id"];

  auto first = std::async(std::launch::async, [&] {
    httplib::Client c(g.http().host(), g.http().port());
    c.set_read_timeout(10, 0);
    return c.Post("/sessions/" + id + "/step",
                  ordered_json{{"action", "Action_type: ask_shopper\nAction_content: Which color?"}}.dump(),
                  "application/json")
        ->status;
  });
  entered.get_future().wait();
  r = g.post("/sessions/" + id + "/step", {{"action", "search[jacket]"}});
  CHECK(r->status == 409);
  {
    std::lock_guard lock(mu);
    release = true;
  }
  cv.notify_all();
  CHECK(first.get() == 200);
  CHECK(ordered_json::parse(g.http().Get("/sessions/" + id)->body)["step_count"] == 1);
  chat.stop();
  chat_thread.join();
}

}
