#include "skillagent/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace skillagent {

const char* role_name(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_name(const std::string& name) {
  if (name == "system") return Role::System;
  if (name == "assistant") return Role::Assistant;
  if (name == "user") return Role::User;
  throw std::invalid_argument("unknown chat role: " + name);
}

}  // namespace skillagent

namespace skillagent::env {

std::string truncate_at_stop(const std::string& body,
                             const std::vector<std::string>& stop) {
  size_t best_end = std::string::npos;
  for (const auto& s : stop) {
    if (s.empty()) continue;
    size_t pos = body.find(s);
    if (pos == std::string::npos) continue;
    size_t end = pos + s.size();
    if (best_end == std::string::npos || end < best_end) best_end = end;
  }
  if (best_end == std::string::npos) return body;
  return body.substr(0, best_end);
}

ScriptedBackend ScriptedBackend::from_responses(std::vector<std::string> responses) {
  std::vector<Entry> script;
  script.reserve(responses.size());
  for (auto& r : responses) script.push_back(Entry{nullptr, std::move(r)});
  return ScriptedBackend(std::move(script));
}

std::string ScriptedBackend::complete(const ChatHistory& history,
                                      const std::vector<std::string>& stop) {
  if (next_ >= script_.size()) {
    throw BackendError("scripted backend exhausted after " +
                       std::to_string(script_.size()) + " responses");
  }
  const Entry& entry = script_[next_++];
  if (entry.expects && !entry.expects(history)) {
    throw BackendError("scripted backend context predicate failed at response " +
                       std::to_string(next_ - 1));
  }
  return truncate_at_stop(entry.response, stop);
}

std::string HttpChatBackend::complete(const ChatHistory& history,
                                      const std::vector<std::string>& stop) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["messages"] = nlohmann::json::array();
  for (const auto& turn : history) {
    body["messages"].push_back(
        {{"role", role_name(turn.role)}, {"content", turn.content}});
  }
  if (!stop.empty()) body["stop"] = stop;

  std::string error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(config_.retry_backoff_ms << (attempt - 1)));
    }
    httplib::Client client(config_.base_url);
    client.set_read_timeout(config_.timeout_sec, 0);
    httplib::Headers headers;
    if (!config_.auth_env_var.empty()) {
      if (const char* token = std::getenv(config_.auth_env_var.c_str())) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
      }
    }
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) {
      error = "connection failure to " + config_.base_url;
      continue;
    }
    if (res->status >= 500) {
      error = "server status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw BackendError("chat backend returned status " + std::to_string(res->status));
    }
    try {
      auto doc = nlohmann::json::parse(res->body);
      auto content =
          doc.at("choices").at(0).at("message").at("content").get<std::string>();
      return truncate_at_stop(content, stop);
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("chat backend response parse failure: ") +
                         e.what());
    }
  }
  throw BackendError("chat backend transport failure: " + error);
}

}  // namespace skillagent::env
