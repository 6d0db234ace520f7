#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "skillagent/backend.hpp"
#include "skillagent/retriever.hpp"

using namespace skillagent;

namespace {

// Serves both the chat and retriever endpoints on a loopback port.
class MockServer {
 public:
  MockServer() {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   ++chat_calls;
                   last_auth = req.get_header_value("Authorization");
                   last_body = req.body;
                   if (fail_next > 0) {
                     --fail_next;
                     res.status = 503;
                     return;
                   }
                   nlohmann::json doc;
                   doc["choices"] = {{{"message", {{"content", chat_reply}}}}};
                   res.set_content(doc.dump(), "application/json");
                 });
    server_.Post("/retrieve",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   auto body = nlohmann::json::parse(req.body);
                   last_query = body.at("query");
                   nlohmann::json doc;
                   doc["passages"] = nlohmann::json::array();
                   for (int i = 0; i < body.at("k").get<int>() && i < 2; ++i) {
                     doc["passages"].push_back(
                         {{"doc_id", "doc-" + std::to_string(i)},
                          {"title", "T"},
                          {"text", "body " + std::to_string(i)},
                          {"score", 1.0 - 0.1 * i}});
                   }
                   res.set_content(doc.dump(), "application/json");
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const {
    return "http://127.0.0.1:" + std::to_string(port_);
  }

  std::atomic<int> chat_calls{0};
  std::atomic<int> fail_next{0};
  std::string chat_reply = "<select_skill>bridge-entity-search</select_skill>";
  std::string last_auth;
  std::string last_body;
  std::string last_query;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("http chat backend round-trips messages and bearer auth") {
  MockServer server;
  setenv("SKILLAGENT_TEST_TOKEN", "sekrit", 1);
  env::HttpBackendConfig config;
  config.base_url = server.base_url();
  config.model = "test-model";
  config.auth_env_var = "SKILLAGENT_TEST_TOKEN";
  env::HttpChatBackend backend(config);

  ChatHistory history = {{Role::System, "sys"}, {Role::User, "question"}};
  auto reply = backend.complete(history, {"</select_skill>"});
  CHECK(reply == "<select_skill>bridge-entity-search</select_skill>");
  CHECK(server.last_auth == "Bearer sekrit");

  auto body = nlohmann::json::parse(server.last_body);
  CHECK(body.at("model") == "test-model");
  REQUIRE(body.at("messages").size() == 2);
  CHECK(body.at("messages")[0].at("role") == "system");
  CHECK(body.at("messages")[1].at("content") == "question");
  unsetenv("SKILLAGENT_TEST_TOKEN");
}

TEST_CASE("http chat backend truncates at stop sequences") {
  MockServer server;
  server.chat_reply = "<skill>a</skill>\n<search>q</search>\ntrailing chatter";
  env::HttpBackendConfig config;
  config.base_url = server.base_url();
  env::HttpChatBackend backend(config);
  ChatHistory history = {{Role::User, "q"}};
  CHECK(backend.complete(history, {"</search>", "</answer>"}) ==
        "<skill>a</skill>\n<search>q</search>");
}

TEST_CASE("http chat backend retries transient failures, then surfaces them") {
  MockServer server;
  env::HttpBackendConfig config;
  config.base_url = server.base_url();
  config.max_retries = 2;
  config.retry_backoff_ms = 1;
  env::HttpChatBackend backend(config);
  ChatHistory history = {{Role::User, "q"}};

  server.fail_next = 2;
  auto reply = backend.complete(history, {});
  CHECK(reply == server.chat_reply);
  CHECK(server.chat_calls == 3);

  server.chat_calls = 0;
  server.fail_next = 5;
  CHECK_THROWS_AS(backend.complete(history, {}), env::BackendError);
  CHECK(server.chat_calls == 3);  // initial try + 2 retries
}

TEST_CASE("http retriever posts query and parses passages") {
  MockServer server;
  env::HttpRetriever retriever(server.base_url());
  auto passages = retriever.retrieve("emu war", 3);
  CHECK(server.last_query == "emu war");
  REQUIRE(passages.size() == 2);
  CHECK(passages[0].doc_id == "doc-0");
  CHECK(passages[0].score == doctest::Approx(1.0));
  CHECK(passages[1].text == "body 1");
}

TEST_CASE("http errors against a closed port surface as typed failures") {
  env::HttpBackendConfig config;
  config.base_url = "http://127.0.0.1:1";  // nothing listens here
  config.max_retries = 0;
  config.timeout_sec = 1;
  env::HttpChatBackend backend(config);
  ChatHistory history = {{Role::User, "q"}};
  CHECK_THROWS_AS(backend.complete(history, {}), env::BackendError);

  env::HttpRetriever retriever("http://127.0.0.1:1", "/retrieve", 1);
  CHECK_THROWS_AS(retriever.retrieve("q", 3), env::RetrieverError);
}
