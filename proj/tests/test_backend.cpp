#include <doctest.h>

#include <string>
#include <vector>

#include "skillagent/backend.hpp"

using namespace skillagent;

TEST_CASE("truncate_at_stop keeps text through the earliest stop") {
  std::vector<std::string> stop = {"</search>", "</answer>"};
  CHECK(env::truncate_at_stop("<search>q</search> trailing", stop) ==
        "<search>q</search>");
  // Earliest occurrence wins regardless of stop-list order.
  CHECK(env::truncate_at_stop("<answer>x</answer><search>q</search>", stop) ==
        "<answer>x</answer>");
  CHECK(env::truncate_at_stop("no stops at all", stop) == "no stops at all");
  CHECK(env::truncate_at_stop("text", {}) == "text");
}

TEST_CASE("scripted backend replays responses in order") {
  auto backend = env::ScriptedBackend::from_responses(
      {"<select_skill>bridge-entity-search</select_skill>", "second"});
  ChatHistory history = {{Role::User, "q"}};
  CHECK(backend.complete(history, {"</select_skill>"}) ==
        "<select_skill>bridge-entity-search</select_skill>");
  CHECK(backend.consumed() == 1);
  CHECK(backend.remaining() == 1);
  CHECK(backend.complete(history, {}) == "second");
}

TEST_CASE("script exhaustion is a backend error") {
  auto backend = env::ScriptedBackend::from_responses({"only"});
  ChatHistory history = {{Role::User, "q"}};
  backend.complete(history, {});
  CHECK_THROWS_AS(backend.complete(history, {}), env::BackendError);
}

TEST_CASE("context predicates are asserted") {
  env::ScriptedBackend backend({
      {[](const ChatHistory& h) { return !h.empty() && h.back().content == "expected"; },
       "ok"},
      {[](const ChatHistory&) { return false; }, "never"},
  });
  ChatHistory good = {{Role::User, "expected"}};
  CHECK(backend.complete(good, {}) == "ok");
  CHECK_THROWS_AS(backend.complete(good, {}), env::BackendError);
}

TEST_CASE("scripted responses are truncated at stop sequences") {
  auto backend = env::ScriptedBackend::from_responses(
      {"<skill>a</skill>\n<search>q</search>\nchatter after stop"});
  ChatHistory history = {{Role::User, "q"}};
  CHECK(backend.complete(history, {"</search>", "</answer>"}) ==
        "<skill>a</skill>\n<search>q</search>");
}
