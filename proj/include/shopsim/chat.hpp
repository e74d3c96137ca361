#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

namespace shopsim {

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

/// A chat-completion provider. Implementations must be safe to call from
/// several sessions at once.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Returns the assistant text. Throws BackendError.
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
  virtual std::string id() const = 0;
};

struct ChatConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string model;
  std::string api_key;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  int backoff_ms = 200;
  double temperature = 0.0;

  /// JSON file with the same keys; missing file fields keep defaults. Then
  /// SHOPSIM_LLM_BASE_URL, _MODEL, _API_KEY, _TIMEOUT and _RETRIES override.
  static ChatConfig load(const std::filesystem::path& path = {});
  void apply_env();
};

struct AttemptLog {
  int attempt = 0;
  int status = 0;  // HTTP status, 0 when no response
  std::string error;
};

/// OpenAI-style POST {base_url}/chat/completions. Retries connection
/// failures, timeouts, 429 and 5xx with doubling backoff.
class HttpChatBackend : public ChatBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpChatBackend(ChatConfig config);
  std::string complete(const std::vector<ChatMessage>& messages) override;
  std::string id() const override { return "http:" + config_.model; }

  std::vector<AttemptLog> attempts() const;
  void set_sleeper(Sleeper s) { sleep_ = std::move(s); }

 private:
  ChatConfig config_;
  std::string scheme_host_;
  std::string path_prefix_;
  Sleeper sleep_;
  mutable std::mutex mu_;
  std::vector<AttemptLog> attempts_;
};

/// Extracts choices[0].message.content from a completion body. Throws
/// BackendError(MalformedCompletion) on anything else or an empty string.
std::string parse_completion(const std::string& body);

}  // namespace shopsim
