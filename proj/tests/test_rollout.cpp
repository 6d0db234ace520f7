#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillagent/rollout.hpp"

using namespace skillagent;
namespace fs = std::filesystem;

namespace {

const fs::path kData = SKILLAGENT_DATA_DIR;

struct CaseFixture {
  std::string question;
  std::vector<std::string> gold_answers;
  std::string expected_answer;
  int expected_search_count = 0;
  std::vector<std::string> responses;
};

CaseFixture load_case(int n) {
  std::ifstream in(kData / "cases" / ("case" + std::to_string(n) + ".json"));
  REQUIRE(in.good());
  nlohmann::json doc = nlohmann::json::parse(in);
  CaseFixture fixture;
  fixture.question = doc.at("question");
  for (const auto& g : doc.at("gold_answers")) {
    fixture.gold_answers.push_back(g);
  }
  fixture.expected_answer = doc.at("expected_answer");
  fixture.expected_search_count = doc.at("expected_search_count");
  for (const auto& r : doc.at("responses")) fixture.responses.push_back(r);
  return fixture;
}

env::TfIdfIndex& fixture_index() {
  static env::TfIdfIndex index =
      env::TfIdfIndex::build(kData / "corpus" / "fixture_corpus.jsonl");
  return index;
}

skillbank::SkillBankVersion& bank() {
  static auto b4 = skillbank::load_bank(kData / "banks" / "b4.json");
  return b4;
}

// Records every history passed to the wrapped backend, for comparison with
// reconstruct_history.
class RecordingBackend : public env::ChatBackend {
 public:
  explicit RecordingBackend(env::ChatBackend& inner) : inner_(inner) {}

  std::string complete(const ChatHistory& history,
                       const std::vector<std::string>& stop) override {
    histories.push_back(history);
    return inner_.complete(history, stop);
  }

  std::vector<ChatHistory> histories;

 private:
  env::ChatBackend& inner_;
};

}  // namespace

TEST_CASE("scripted case 2 answers in two searches") {
  auto fixture = load_case(2);
  auto backend = env::ScriptedBackend::from_responses(fixture.responses);
  rollout::RolloutConfig config;
  config.system_prompt = rollout::default_system_prompt();
  auto outcome = rollout::run_rollout(fixture.question, bank(), backend,
                                      fixture_index(), config);
  CHECK(outcome.status == rollout::RolloutOutcome::Status::Answered);
  CHECK(outcome.final_answer == "David Dinkins");
  CHECK(outcome.search_count() == 2);
  REQUIRE(outcome.trace.size() == 3);
  CHECK(outcome.trace.back().action.kind == tags::ActionKind::Answer);
  // retrieved present iff the action is a search
  CHECK(outcome.trace[0].retrieved.has_value());
  CHECK(outcome.trace[1].retrieved.has_value());
  CHECK_FALSE(outcome.trace[2].retrieved.has_value());
  for (const auto& step : outcome.trace) {
    if (step.retrieved) CHECK(step.retrieved->size() <= 3);
  }
}

TEST_CASE("budget exhaustion after exactly budget searches") {
  std::vector<std::string> responses;
  for (int i = 0; i < 5; ++i) {
    responses.push_back("<select_skill>bridge-entity-search</select_skill>");
    responses.push_back("<skill>bridge-entity-search</skill>\n<search>emu query " +
                        std::to_string(i) + " australia</search>");
  }
  auto backend = env::ScriptedBackend::from_responses(responses);
  rollout::RolloutConfig config;  // budget 5
  auto outcome =
      rollout::run_rollout("q", bank(), backend, fixture_index(), config);
  CHECK(outcome.status == rollout::RolloutOutcome::Status::BudgetExhausted);
  CHECK(outcome.search_count() == 5);
  CHECK(backend.remaining() == 0);
}

TEST_CASE("bare closing tag is an invalid action, not a crash") {
  auto backend = env::ScriptedBackend::from_responses(
      {"<select_skill>bridge-entity-search</select_skill>", "</search>"});
  rollout::RolloutConfig config;
  auto outcome =
      rollout::run_rollout("q", bank(), backend, fixture_index(), config);
  CHECK(outcome.status == rollout::RolloutOutcome::Status::InvalidAction);
  CHECK(outcome.failure_reason.find("MalformedTag") != std::string::npos);
}

TEST_CASE("unknown selected skill ids are recorded, not fatal") {
  auto backend = env::ScriptedBackend::from_responses(
      {"<select_skill>search-wiki-entity</select_skill>",
       "<skill>search-wiki-entity</skill>\n<answer>whatever</answer>"});
  rollout::RolloutConfig config;
  auto outcome =
      rollout::run_rollout("q", bank(), backend, fixture_index(), config);
  CHECK(outcome.status == rollout::RolloutOutcome::Status::Answered);
  REQUIRE(outcome.trace.size() == 1);
  CHECK(outcome.trace[0].cards_shown.empty());
  REQUIRE(outcome.trace[0].unrecognized_ids.size() == 1);
  CHECK(outcome.trace[0].unrecognized_ids[0] == "search-wiki-entity");
}

TEST_CASE("batch isolation, order, and determinism under parallelism") {
  auto case2 = load_case(2);
  std::vector<std::string> questions = {case2.question, "broken", case2.question};
  rollout::BackendFactory factory = [&](size_t i) -> std::unique_ptr<env::ChatBackend> {
    if (i == 1) {
      // Empty script: first completion request fails at the transport level.
      return std::make_unique<env::ScriptedBackend>(
          std::vector<env::ScriptedBackend::Entry>{});
    }
    return std::make_unique<env::ScriptedBackend>(
        env::ScriptedBackend::from_responses(case2.responses));
  };
  rollout::RolloutConfig config;

  auto seq = rollout::run_batch(questions, bank(), factory, fixture_index(),
                                config, 1);
  REQUIRE(seq.size() == 3);
  CHECK(seq[0].status == rollout::RolloutOutcome::Status::Answered);
  CHECK(seq[1].status == rollout::RolloutOutcome::Status::BackendFailure);
  CHECK(seq[2].status == rollout::RolloutOutcome::Status::Answered);
  CHECK(seq[0].final_answer == "David Dinkins");

  auto par = rollout::run_batch(questions, bank(), factory, fixture_index(),
                                config, 8);
  REQUIRE(par.size() == seq.size());
  for (size_t i = 0; i < seq.size(); ++i) {
    CHECK(rollout::outcome_to_json(par[i]) == rollout::outcome_to_json(seq[i]));
  }

  CHECK(rollout::run_batch({}, bank(), factory, fixture_index(), config).empty());
}

TEST_CASE("history reconstruction is byte-equal to what the policy saw") {
  auto fixture = load_case(2);
  auto scripted = env::ScriptedBackend::from_responses(fixture.responses);
  RecordingBackend recorder(scripted);
  rollout::RolloutConfig config;
  config.system_prompt = rollout::default_system_prompt();
  auto outcome = rollout::run_rollout(fixture.question, bank(), recorder,
                                      fixture_index(), config);
  REQUIRE(outcome.status == rollout::RolloutOutcome::Status::Answered);
  REQUIRE(recorder.histories.size() == 2 * outcome.trace.size());

  for (size_t step = 0; step < outcome.trace.size(); ++step) {
    auto before_sel = rollout::reconstruct_history(
        fixture.question, bank(), outcome.trace, step,
        rollout::PromptPoint::BeforeSelection, config);
    auto before_act = rollout::reconstruct_history(
        fixture.question, bank(), outcome.trace, step,
        rollout::PromptPoint::BeforeAction, config);
    CHECK(before_sel == recorder.histories[2 * step]);
    CHECK(before_act == recorder.histories[2 * step + 1]);
  }
}

TEST_CASE("trace file round-trip preserves outcomes") {
  auto fixture = load_case(2);
  auto backend = env::ScriptedBackend::from_responses(fixture.responses);
  rollout::RolloutConfig config;
  auto outcome = rollout::run_rollout(fixture.question, bank(), backend,
                                      fixture_index(), config);
  auto path = fs::temp_directory_path() / "rollout_roundtrip.jsonl";
  rollout::write_trace_file({outcome}, path);
  auto loaded = rollout::read_trace_file(path);
  REQUIRE(loaded.size() == 1);
  CHECK(rollout::outcome_to_json(loaded[0]) == rollout::outcome_to_json(outcome));
  fs::remove(path);
}

TEST_CASE("replay of frozen traces matches the live retriever") {
  auto traces = rollout::read_trace_file(kData / "cases" / "traces.jsonl");
  REQUIRE(traces.size() == 7);
  for (const auto& fixture : traces) {
    auto report = rollout::replay_trace(fixture, fixture_index(), 3);
    CHECK(report.all_match);
  }
}

TEST_CASE("replay against an unrelated corpus mismatches every search") {
  std::vector<Passage> unrelated = {
      {"only-doc", "Unrelated", "Nothing in common with any case query.", 0.0}};
  auto index = env::TfIdfIndex::build_from_docs(unrelated);
  auto traces = rollout::read_trace_file(kData / "cases" / "traces.jsonl");
  REQUIRE_FALSE(traces.empty());
  auto report = rollout::replay_trace(traces[0], index, 3);
  CHECK_FALSE(report.all_match);
  for (const auto& step : report.steps) CHECK_FALSE(step.match);
}

TEST_CASE("replay of a zero-search trace trivially matches") {
  auto backend = env::ScriptedBackend::from_responses(
      {"<select_skill>single-entity-relation-lookup</select_skill>",
       "<skill>single-entity-relation-lookup</skill>\n<answer>42</answer>"});
  rollout::RolloutConfig config;
  auto outcome =
      rollout::run_rollout("q", bank(), backend, fixture_index(), config);
  auto report = rollout::replay_trace(outcome, fixture_index(), 3);
  CHECK(report.all_match);
  CHECK(report.steps.empty());
}
