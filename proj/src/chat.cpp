#include "shopsim/chat.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "shopsim/error.hpp"

namespace shopsim {

using json = nlohmann::ordered_json;

ChatConfig ChatConfig::load(const std::filesystem::path& path) {
  ChatConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("chat config", path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(e.what(), 0, "chat config");
    }
    c.base_url = j.value("base_url", c.base_url);
    c.model = j.value("model", c.model);
    c.api_key = j.value("api_key", c.api_key);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.temperature = j.value("temperature", c.temperature);
  }
  c.apply_env();
  return c;
}

void ChatConfig::apply_env() {
  auto env = [](const char* name) -> const char* {
    const char* v = std::getenv(name);
    return (v && *v) ? v : nullptr;
  };
  if (auto v = env("SHOPSIM_LLM_BASE_URL")) base_url = v;
  if (auto v = env("SHOPSIM_LLM_MODEL")) model = v;
  if (auto v = env("SHOPSIM_LLM_API_KEY")) api_key = v;
  if (auto v = env("SHOPSIM_LLM_TIMEOUT")) timeout_seconds = std::atof(v);
  if (auto v = env("SHOPSIM_LLM_RETRIES")) max_retries = std::atoi(v);
}

std::string parse_completion(const std::string& body) {
  std::string content;
  try {
    const auto j = json::parse(body);
    content = j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(BackendError::Kind::MalformedCompletion, std::string("malformed completion: ") + e.what());
  }
  if (content.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw BackendError(BackendError::Kind::MalformedCompletion, "empty completion");
  }
  return content;
}

HttpChatBackend::HttpChatBackend(ChatConfig config)
    : config_(std::move(config)), sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  const auto& url = config_.base_url;
  const auto scheme_end = url.find("://");
  if (url.empty() || scheme_end == std::string::npos) {
    throw ValidationError("base_url must look like http://host:port/path", 0, "base_url");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::vector<AttemptLog> HttpChatBackend::attempts() const {
  std::lock_guard lock(mu_);
  return attempts_;
}

std::string HttpChatBackend::complete(const std::vector<ChatMessage>& messages) {
  json body;
  body["model"] = config_.model;
  body["temperature"] = config_.temperature;
  body["messages"] = json::array();
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const auto payload = body.dump();

  httplib::Client client(scheme_host_);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const int total = std::max(1, config_.max_retries + 1);
  auto delay = std::chrono::milliseconds(config_.backoff_ms);
  BackendError last(BackendError::Kind::Unreachable, "no attempt made");
  for (int attempt = 1; attempt <= total; ++attempt) {
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, payload, "application/json");
    AttemptLog log{attempt, res ? res->status : 0, {}};
    bool retry = false;
    if (!res) {
      const auto err = res.error();
      log.error = httplib::to_string(err);
      const auto kind = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout
                            ? BackendError::Kind::Timeout
                            : BackendError::Kind::Unreachable;
      last = BackendError(kind, "chat backend " + scheme_host_ + ": " + log.error);
      retry = true;
    } else if (res->status == 429 || res->status >= 500) {
      log.error = "HTTP " + std::to_string(res->status);
      last = BackendError(BackendError::Kind::HttpStatus, "chat backend returned " + log.error);
      retry = true;
    } else if (res->status != 200) {
      log.error = "HTTP " + std::to_string(res->status);
      {
        std::lock_guard lock(mu_);
        attempts_.push_back(log);
      }
      throw BackendError(BackendError::Kind::HttpStatus, "chat backend returned " + log.error + ": " + res->body);
    }
    {
      std::lock_guard lock(mu_);
      attempts_.push_back(log);
    }
    if (!retry) return parse_completion(res->body);
    if (attempt < total) {
      sleep_(delay);
      delay *= 2;
    }
  }
  throw last;
}

}  // namespace shopsim
