#include <benchmark/benchmark.h>

#include <random>
#include <sstream>

#include "skillagent/eval.hpp"
#include "skillagent/retriever.hpp"
#include "skillagent/tags.hpp"

namespace sa = skillagent;

namespace {

std::string make_action_turn() {
  return "<skill>bridge-entity-search|verbatim-evidence-span</skill>\n"
         "<search>first president of the united states inauguration date</search>";
}

void BM_ParseActionTurn(benchmark::State& state) {
  const std::string turn = make_action_turn();
  for (auto _ : state) {
    auto parsed = sa::tags::parse_action_turn(turn);
    benchmark::DoNotOptimize(parsed);
  }
}
BENCHMARK(BM_ParseActionTurn);

void BM_NormalizeAnswer(benchmark::State& state) {
  const std::string answer = "The 35th President of the United States, John F. Kennedy!";
  for (auto _ : state) {
    auto norm = sa::eval::normalize_answer(answer);
    benchmark::DoNotOptimize(norm);
  }
}
BENCHMARK(BM_NormalizeAnswer);

std::vector<sa::Passage> synthetic_corpus(size_t n) {
  std::mt19937_64 rng(7);
  std::vector<std::string> vocab;
  for (int i = 0; i < 500; ++i) vocab.push_back("term" + std::to_string(i));
  std::vector<sa::Passage> docs;
  for (size_t d = 0; d < n; ++d) {
    std::ostringstream body;
    for (int w = 0; w < 80; ++w) body << vocab[rng() % vocab.size()] << ' ';
    sa::Passage p;
    p.doc_id = "doc-" + std::to_string(d);
    p.title = "Title " + std::to_string(d);
    p.text = body.str();
    docs.push_back(std::move(p));
  }
  return docs;
}

void BM_TfIdfRetrieve(benchmark::State& state) {
  auto index = sa::env::TfIdfIndex::build_from_docs(synthetic_corpus(1000));
  const std::string query = "term1 term42 term99 term123";
  for (auto _ : state) {
    auto results = index.retrieve(query, 3);
    benchmark::DoNotOptimize(results);
  }
}
BENCHMARK(BM_TfIdfRetrieve);

void BM_RenderInformation(benchmark::State& state) {
  auto docs = synthetic_corpus(3);
  for (auto _ : state) {
    auto block = sa::tags::render_information(docs);
    benchmark::DoNotOptimize(block);
  }
}
BENCHMARK(BM_RenderInformation);

}  // namespace

BENCHMARK_MAIN();
