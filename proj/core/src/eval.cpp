#include "skillagent/eval.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "skillagent/text.hpp"

namespace skillagent::eval {

std::string normalize_answer(std::string_view s) {
  std::string stripped;
  stripped.reserve(s.size());
  for (char ch : s) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::ispunct(c)) continue;
    stripped.push_back(static_cast<char>(std::tolower(c)));
  }
  std::string out;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    if (word != "a" && word != "an" && word != "the") {
      if (!out.empty()) out += ' ';
      out += word;
    }
    word.clear();
  };
  for (char c : stripped) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      word.push_back(c);
    }
  }
  flush();
  return out;
}

int exact_match(std::string_view prediction, const std::vector<std::string>& golds) {
  const std::string norm_pred = normalize_answer(prediction);
  for (const auto& gold : golds) {
    if (norm_pred == normalize_answer(gold)) return 1;
  }
  return 0;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

EvalResult aggregate(const std::map<std::string, double>& per_dataset_em,
                     double best_avg_in_block) {
  if (per_dataset_em.empty()) {
    throw std::invalid_argument("aggregate: no datasets");
  }
  EvalResult result;
  result.per_dataset_em = per_dataset_em;
  double sum = 0.0;
  for (const auto& [_, em] : per_dataset_em) sum += em;
  result.macro_avg = sum / static_cast<double>(per_dataset_em.size());
  result.delta_from_best = std::max(0.0, best_avg_in_block - result.macro_avg);
  return result;
}

bool atomic_query_heuristic(const std::string& query, const std::string& question,
                            double jaccard_threshold) {
  auto q_tokens = text::tokenize(query);
  auto question_tokens = text::tokenize(question);
  if (q_tokens.size() >= question_tokens.size()) return false;
  double j = text::jaccard({q_tokens.begin(), q_tokens.end()},
                           {question_tokens.begin(), question_tokens.end()});
  return j < jaccard_threshold;
}

DiagnosticsReport compute_diagnostics(const std::vector<rollout::RolloutOutcome>& traces,
                                      const std::vector<std::vector<std::string>>& golds,
                                      const DiagnosticsConfig& config) {
  DiagnosticsReport report;
  if (traces.empty()) return report;

  size_t traces_with_search = 0;
  size_t first_copies = 0;
  size_t total_queries = 0;
  size_t atomic_queries = 0;
  size_t total_searches = 0;
  size_t correct_at_3 = 0;

  for (size_t i = 0; i < traces.size(); ++i) {
    const auto& trace = traces[i];
    const auto question_set = text::token_set(trace.question);
    bool first = true;
    size_t searches = 0;
    for (const auto& step : trace.trace) {
      if (step.action.kind != tags::ActionKind::Search) continue;
      const std::string& query = step.action.payload;
      ++searches;
      ++total_queries;
      if (first) {
        first = false;
        ++traces_with_search;
        if (text::jaccard(text::token_set(query), question_set) >=
            config.near_copy_threshold) {
          ++first_copies;
        }
      }
      bool atomic = config.atomic_judge
                        ? config.atomic_judge(query, trace.question)
                        : atomic_query_heuristic(query, trace.question,
                                                 config.near_copy_threshold);
      if (atomic) ++atomic_queries;
    }
    total_searches += searches;
    if (i < golds.size() && trace.status == rollout::RolloutOutcome::Status::Answered &&
        searches <= 3 && exact_match(trace.final_answer, golds[i]) == 1) {
      ++correct_at_3;
    }
  }

  if (traces_with_search > 0) {
    report.first_query_copy_rate =
        100.0 * static_cast<double>(first_copies) / traces_with_search;
  }
  if (total_queries > 0) {
    report.atomic_hop_rate = 100.0 * static_cast<double>(atomic_queries) / total_queries;
  }
  report.avg_searches = static_cast<double>(total_searches) / traces.size();
  report.correct_at_3 = 100.0 * static_cast<double>(correct_at_3) / traces.size();
  return report;
}

RewardBreakdown score_reward(const rollout::RolloutOutcome& traj,
                             const std::vector<std::string>& golds, double lambda_e,
                             double lambda_d) {
  RewardBreakdown reward;
  reward.lambda_e = lambda_e;
  reward.lambda_d = lambda_d;
  reward.r_em = traj.status == rollout::RolloutOutcome::Status::Answered
                    ? exact_match(traj.final_answer, golds)
                    : 0;

  std::vector<std::string> norm_golds;
  for (const auto& g : golds) {
    auto n = normalize_answer(g);
    if (!n.empty()) norm_golds.push_back(std::move(n));
  }
  std::unordered_set<std::string> seen_docs;
  std::unordered_set<std::string> seen_queries;
  for (const auto& step : traj.trace) {
    if (step.action.kind != tags::ActionKind::Search) continue;
    auto norm_query = text::join(text::tokenize(step.action.payload), " ");
    if (!seen_queries.insert(norm_query).second) ++reward.r_dup;
    if (!step.retrieved) continue;
    for (const auto& passage : *step.retrieved) {
      if (!seen_docs.insert(passage.doc_id).second) continue;
      if (reward.r_evi) continue;
      auto norm_passage = normalize_answer(passage.title + ". " + passage.text);
      for (const auto& gold : norm_golds) {
        if (norm_passage.find(gold) != std::string::npos) {
          reward.r_evi = 1;
          break;
        }
      }
    }
  }
  reward.total = reward.r_em + lambda_e * reward.r_evi - lambda_d * reward.r_dup;
  return reward;
}

BenchmarkResult run_benchmark(const std::vector<EvalExample>& split,
                              const skillbank::SkillBankVersion& bank,
                              const rollout::BackendFactory& backend_for,
                              const env::Retriever& retriever,
                              const rollout::RolloutConfig& rollout_config,
                              const DiagnosticsConfig& diag_config, int parallelism) {
  if (split.empty()) throw std::invalid_argument("run_benchmark: empty split");

  std::vector<std::string> questions;
  questions.reserve(split.size());
  for (const auto& ex : split) questions.push_back(ex.question);

  BenchmarkResult result;
  result.outcomes = rollout::run_batch(questions, bank, backend_for, retriever,
                                       rollout_config, parallelism);

  std::map<std::string, double> em_sum;
  std::map<std::string, size_t> em_count;
  std::vector<std::vector<std::string>> golds;
  for (size_t i = 0; i < split.size(); ++i) {
    const auto& outcome = result.outcomes[i];
    int em = outcome.status == rollout::RolloutOutcome::Status::Answered
                 ? exact_match(outcome.final_answer, split[i].golds)
                 : 0;
    em_sum[split[i].dataset] += em;
    em_count[split[i].dataset] += 1;
    golds.push_back(split[i].golds);
  }
  std::map<std::string, double> per_dataset;
  for (const auto& [dataset, sum] : em_sum) {
    per_dataset[dataset] = 100.0 * sum / static_cast<double>(em_count[dataset]);
  }
  result.eval = aggregate(per_dataset, /*best_avg_in_block=*/0.0);
  result.eval.delta_from_best = 0.0;
  result.diagnostics = compute_diagnostics(result.outcomes, golds, diag_config);
  return result;
}

}  // namespace skillagent::eval
