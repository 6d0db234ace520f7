#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillagent/eval.hpp"
#include "skillagent/text.hpp"

using namespace skillagent;
namespace fs = std::filesystem;

namespace {

const fs::path kData = SKILLAGENT_DATA_DIR;

skillbank::SkillBankVersion& bank() {
  static auto b4 = skillbank::load_bank(kData / "banks" / "b4.json");
  return b4;
}

env::TfIdfIndex& fixture_index() {
  static env::TfIdfIndex index =
      env::TfIdfIndex::build(kData / "corpus" / "fixture_corpus.jsonl");
  return index;
}

}  // namespace

TEST_CASE("answer normalization") {
  CHECK(eval::normalize_answer("David Dinkins.") == "david dinkins");
  CHECK(eval::normalize_answer("the Grand Dauphin") == "grand dauphin");
  CHECK(eval::normalize_answer("1964") == "1964");
  CHECK(eval::normalize_answer("  An   Answer  ") == "answer");
  CHECK(eval::normalize_answer("") == "");
}

TEST_CASE("exact match") {
  CHECK(eval::exact_match("Abdul Wahab Khan Tarzi", {"Abdul Wahab Khan Tarzi"}) == 1);
  CHECK(eval::exact_match("Louis XIV", {"Louis, Grand Dauphin"}) == 0);
  CHECK(eval::exact_match("", {"x"}) == 0);
  CHECK(eval::exact_match("London", {"Paris", "london."}) == 1);
}

TEST_CASE("exact match is symmetric under normalization") {
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"The Answer", "answer"},
      {"David Dinkins.", "david dinkins"},
      {"1964", "in 1964"},
      {"London", "Paris"},
  };
  for (const auto& [a, b] : pairs) {
    CHECK(eval::exact_match(a, {b}) == eval::exact_match(b, {a}));
  }
}

TEST_CASE("aggregate reproduces the reported averages") {
  std::map<std::string, double> row = {
      {"nq", 40.89},   {"triviaqa", 60.01}, {"popqa", 52.80}, {"hotpotqa", 42.00},
      {"2wiki", 47.00}, {"musique", 14.50},  {"bamboogle", 39.20}};
  auto result = eval::aggregate(row, 42.34);
  CHECK(eval::round2(result.macro_avg) == doctest::Approx(42.34));
  CHECK(result.delta_from_best == doctest::Approx(0.0).epsilon(0.01));

  std::map<std::string, double> single = {{"only", 50.0}};
  auto s = eval::aggregate(single, 50.0);
  CHECK(s.macro_avg == doctest::Approx(50.0));
  CHECK(s.delta_from_best == doctest::Approx(0.0));
}

TEST_CASE("aggregate matches all transcribed result-table rows") {
  std::ifstream in(kData / "table1.json");
  REQUIRE(in.good());
  nlohmann::json table = nlohmann::json::parse(in);
  std::vector<std::string> datasets;
  for (const auto& d : table.at("datasets")) datasets.push_back(d);
  size_t rows_checked = 0;
  for (const auto& block : table.at("blocks")) {
    double best_avg = 0.0;
    for (const auto& row : block.at("rows")) {
      if (row.at("is_best").get<bool>()) best_avg = row.at("avg").get<double>();
    }
    for (const auto& row : block.at("rows")) {
      std::map<std::string, double> em;
      for (const auto& d : datasets) {
        em[d] = row.at("em").at(d).get<double>();
      }
      auto result = eval::aggregate(em, best_avg);
      CHECK(std::abs(result.macro_avg - row.at("avg").get<double>()) <= 0.005);
      if (!row.at("delta").is_null()) {
        CHECK(std::abs(result.delta_from_best - row.at("delta").get<double>()) <=
              0.01);
      }
      ++rows_checked;
    }
  }
  CHECK(rows_checked == 18);
}

namespace {

rollout::RolloutOutcome make_trace(const std::string& question,
                                   const std::vector<std::string>& queries,
                                   const std::string& answer,
                                   bool answered = true) {
  rollout::RolloutOutcome outcome;
  outcome.question = question;
  for (const auto& q : queries) {
    rollout::TraceStep step;
    step.action.skills = {"bridge-entity-search"};
    step.action.kind = tags::ActionKind::Search;
    step.action.payload = q;
    step.retrieved = std::vector<Passage>{};
    outcome.trace.push_back(std::move(step));
  }
  if (answered) {
    rollout::TraceStep step;
    step.action.skills = {"verbatim-evidence-span"};
    step.action.kind = tags::ActionKind::Answer;
    step.action.payload = answer;
    outcome.trace.push_back(std::move(step));
    outcome.status = rollout::RolloutOutcome::Status::Answered;
    outcome.final_answer = answer;
  } else {
    outcome.status = rollout::RolloutOutcome::Status::BudgetExhausted;
  }
  return outcome;
}

// Independent reference for the four diagnostics, recomputed from the raw
// trace records with no shared code path beyond the text utilities.
eval::DiagnosticsReport reference_diagnostics(
    const std::vector<rollout::RolloutOutcome>& traces,
    const std::vector<std::vector<std::string>>& golds, double threshold) {
  size_t with_search = 0, copies = 0, total_queries = 0, atomic = 0;
  size_t correct3 = 0, total_searches = 0;
  for (size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    std::vector<std::string> queries;
    for (const auto& step : t.trace) {
      if (step.action.kind == tags::ActionKind::Search) {
        queries.push_back(step.action.payload);
      }
    }
    total_searches += queries.size();
    auto qset = text::token_set(t.question);
    if (!queries.empty()) {
      ++with_search;
      if (text::jaccard(text::token_set(queries.front()), qset) >= threshold) {
        ++copies;
      }
    }
    for (const auto& q : queries) {
      ++total_queries;
      bool shorter = text::tokenize(q).size() < text::tokenize(t.question).size();
      bool distinct = text::jaccard(text::token_set(q), qset) < threshold;
      if (shorter && distinct) ++atomic;
    }
    if (t.status == rollout::RolloutOutcome::Status::Answered &&
        eval::exact_match(t.final_answer, golds[i]) == 1 && queries.size() <= 3) {
      ++correct3;
    }
  }
  eval::DiagnosticsReport report;
  if (with_search) {
    report.first_query_copy_rate = 100.0 * static_cast<double>(copies) /
                                   static_cast<double>(with_search);
  }
  if (total_queries) {
    report.atomic_hop_rate =
        100.0 * static_cast<double>(atomic) / static_cast<double>(total_queries);
  }
  if (!traces.empty()) {
    report.avg_searches = static_cast<double>(total_searches) /
                          static_cast<double>(traces.size());
    report.correct_at_3 =
        100.0 * static_cast<double>(correct3) / static_cast<double>(traces.size());
  }
  return report;
}

}  // namespace

TEST_CASE("diagnostics spot checks") {
  auto copy = make_trace("who was the mayor of new york",
                         {"who was the mayor of new york"}, "x");
  auto diag = eval::compute_diagnostics({copy}, {{"x"}});
  CHECK(diag.first_query_copy_rate == doctest::Approx(100.0));

  auto two = make_trace("q one", {"a b", "c d"}, "x");
  auto four = make_trace("q two", {"a", "b", "c", "d"}, "x");
  auto avg = eval::compute_diagnostics({two, four}, {{"x"}, {"x"}});
  CHECK(avg.avg_searches == doctest::Approx(3.0));
  // 4 searches: correct but excluded from correct_at_3; 2 searches: included.
  CHECK(avg.correct_at_3 == doctest::Approx(50.0));
}

TEST_CASE("diagnostics equal the brute-force reference on 25 random traces") {
  std::mt19937_64 rng(1234);
  const std::vector<std::string> vocab = {
      "emu", "war", "australia", "mayor", "city", "new", "york", "eruption",
      "death", "toll", "who", "was", "the", "of", "first"};
  std::uniform_int_distribution<size_t> word(0, vocab.size() - 1);
  std::uniform_int_distribution<int> qlen(3, 8);
  std::uniform_int_distribution<int> n_searches(0, 5);
  std::uniform_int_distribution<int> coin(0, 1);

  auto random_text = [&](int words) {
    std::string out;
    for (int i = 0; i < words; ++i) {
      if (i) out += ' ';
      out += vocab[word(rng)];
    }
    return out;
  };

  std::vector<rollout::RolloutOutcome> traces;
  std::vector<std::vector<std::string>> golds;
  for (int i = 0; i < 25; ++i) {
    std::string question = random_text(qlen(rng));
    int searches = n_searches(rng);
    std::vector<std::string> queries;
    for (int s = 0; s < searches; ++s) {
      // Mix of near-copies and fresh queries.
      queries.push_back(coin(rng) ? question : random_text(qlen(rng)));
    }
    bool answered = coin(rng) == 1;
    std::string gold = "gold-" + std::to_string(i);
    std::string answer = coin(rng) ? gold : "wrong";
    traces.push_back(make_trace(question, queries, answer, answered));
    golds.push_back({gold});
  }

  auto actual = eval::compute_diagnostics(traces, golds);
  auto expected = reference_diagnostics(traces, golds, 0.8);
  CHECK(actual.first_query_copy_rate == doctest::Approx(expected.first_query_copy_rate));
  CHECK(actual.atomic_hop_rate == doctest::Approx(expected.atomic_hop_rate));
  CHECK(actual.avg_searches == doctest::Approx(expected.avg_searches));
  CHECK(actual.correct_at_3 == doctest::Approx(expected.correct_at_3));
}

namespace {

rollout::RolloutOutcome reward_trace(bool em, bool evi, int dup) {
  std::vector<std::string> queries = {"vivien leigh death"};
  for (int d = 0; d < dup; ++d) queries.push_back("Vivien  LEIGH death!");
  if (dup > 0) queries.insert(queries.begin() + 1, "vivien leigh death");
  // Exactly `dup` duplicates: queries[0] plus `dup` normalized repeats.
  queries.resize(1 + dup);
  for (int d = 0; d < dup; ++d) queries[1 + d] = "Vivien Leigh DEATH";
  auto outcome = make_trace("where did vivien leigh die", queries,
                            em ? "London" : "Paris");
  if (evi) {
    outcome.trace[0].retrieved = std::vector<Passage>{
        {"vivien-leigh", "Vivien Leigh", "She died in London at her home.", 1.0}};
  }
  return outcome;
}

}  // namespace

TEST_CASE("reward formula over 10 combinations and 3 lambda settings") {
  struct Combo {
    bool em;
    bool evi;
    int dup;
  };
  const std::vector<Combo> combos = {
      {true, true, 0},  {true, true, 1},  {true, false, 0}, {true, false, 2},
      {false, true, 0}, {false, true, 1}, {false, false, 0}, {false, false, 1},
      {false, false, 2}, {true, true, 2},
  };
  const std::vector<std::pair<double, double>> lambdas = {
      {0.2, 0.1}, {0.5, 0.25}, {0.0, 0.0}};
  for (const auto& combo : combos) {
    auto trace = reward_trace(combo.em, combo.evi, combo.dup);
    for (const auto& [le, ld] : lambdas) {
      auto breakdown = eval::score_reward(trace, {"London"}, le, ld);
      CHECK(breakdown.r_em == (combo.em ? 1 : 0));
      CHECK(breakdown.r_evi == (combo.evi ? 1 : 0));
      CHECK(breakdown.r_dup == combo.dup);
      double expected = (combo.em ? 1.0 : 0.0) + le * (combo.evi ? 1.0 : 0.0) -
                        ld * combo.dup;
      CHECK(breakdown.total == doctest::Approx(expected));
    }
  }

  // Spec spot values with the default coefficients.
  CHECK(eval::score_reward(reward_trace(true, true, 0), {"London"}, 0.2, 0.1)
            .total == doctest::Approx(1.2));
  CHECK(eval::score_reward(reward_trace(false, true, 1), {"London"}, 0.2, 0.1)
            .total == doctest::Approx(0.1));
  auto zero = make_trace("q", {}, "Paris");
  CHECK(eval::score_reward(zero, {"London"}, 0.2, 0.1).total ==
        doctest::Approx(0.0));
}

TEST_CASE("reward is invariant to passage order and duplicate doc ids") {
  auto trace = reward_trace(true, true, 0);
  Passage extra = {"other-doc", "Other", "Nothing relevant here.", 0.2};
  Passage dup = (*trace.trace[0].retrieved)[0];
  trace.trace[0].retrieved = std::vector<Passage>{extra, dup, dup};
  auto a = eval::score_reward(trace, {"London"}, 0.2, 0.1);
  trace.trace[0].retrieved = std::vector<Passage>{dup, dup, extra};
  auto b = eval::score_reward(trace, {"London"}, 0.2, 0.1);
  CHECK(a.r_evi == 1);
  CHECK(a.total == doctest::Approx(b.total));
}

TEST_CASE("run_benchmark over the seven case fixtures scores EM 100") {
  std::vector<eval::EvalExample> split;
  std::vector<std::vector<std::string>> scripts;
  for (int n = 1; n <= 7; ++n) {
    std::ifstream in(kData / "cases" / ("case" + std::to_string(n) + ".json"));
    REQUIRE(in.good());
    nlohmann::json doc = nlohmann::json::parse(in);
    eval::EvalExample example;
    example.example_id = "case" + std::to_string(n);
    example.dataset = "fixtures";
    example.question = doc.at("question");
    for (const auto& g : doc.at("gold_answers")) example.golds.push_back(g);
    split.push_back(example);
    scripts.push_back(doc.at("responses").get<std::vector<std::string>>());
  }
  rollout::BackendFactory factory = [&](size_t i) {
    return std::make_unique<env::ScriptedBackend>(
        env::ScriptedBackend::from_responses(scripts[i]));
  };
  rollout::RolloutConfig config;
  config.system_prompt = rollout::default_system_prompt();
  auto result = eval::run_benchmark(split, bank(), factory, fixture_index(),
                                    config);
  CHECK(result.eval.per_dataset_em.at("fixtures") == doctest::Approx(100.0));
  CHECK(result.outcomes.size() == 7);

  CHECK_THROWS(eval::run_benchmark({}, bank(), factory, fixture_index(), config));
}
