#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skillagent/chat.hpp"

namespace skillagent::env {

/// Transport-level failure (connection, HTTP status, script exhaustion).
/// Distinct from a protocol parse failure, which the rollout records as an
/// invalid action.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// Generated assistant text, truncated at (and including) the first stop
  /// sequence that occurs.
  virtual std::string complete(const ChatHistory& history,
                               const std::vector<std::string>& stop) = 0;
};

/// Keeps text through the end of the earliest stop sequence occurrence.
std::string truncate_at_stop(const std::string& body,
                             const std::vector<std::string>& stop);

/// Deterministic test double replaying a fixed response script. Responses
/// are consumed in order; exhaustion is an error. Single-consumer.
class ScriptedBackend : public ChatBackend {
 public:
  using ContextPredicate = std::function<bool(const ChatHistory&)>;

  struct Entry {
    ContextPredicate expects;  // may be null
    std::string response;
  };

  explicit ScriptedBackend(std::vector<Entry> script) : script_(std::move(script)) {}

  static ScriptedBackend from_responses(std::vector<std::string> responses);

  std::string complete(const ChatHistory& history,
                       const std::vector<std::string>& stop) override;

  size_t consumed() const { return next_; }
  size_t remaining() const { return script_.size() - next_; }

 private:
  std::vector<Entry> script_;
  size_t next_ = 0;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. "http://localhost:8089"
  std::string model;
  std::string auth_env_var;  // env var holding the bearer token; never a flag
  std::string path = "/v1/chat/completions";
  int timeout_sec = 120;
  int max_retries = 2;
  int retry_backoff_ms = 250;
};

/// Chat-completions-style JSON client: messages array in, assistant text out.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {}

  std::string complete(const ChatHistory& history,
                       const std::vector<std::string>& stop) override;

 private:
  HttpBackendConfig config_;
};

}  // namespace skillagent::env
