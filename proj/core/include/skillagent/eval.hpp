#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "skillagent/rollout.hpp"

namespace skillagent::eval {

/// Open-domain QA answer normalization: lowercase, strip punctuation,
/// drop articles (a, an, the), collapse whitespace.
std::string normalize_answer(std::string_view s);

/// 1 iff the normalized prediction equals some normalized gold.
int exact_match(std::string_view prediction, const std::vector<std::string>& golds);

struct EvalResult {
  std::map<std::string, double> per_dataset_em;  // EM percentages
  double macro_avg = 0.0;        // unweighted mean, unrounded
  double delta_from_best = 0.0;  // best_avg - macro_avg, >= 0 for the best row
};

/// Macro average over datasets plus the gap to the best row in the block.
EvalResult aggregate(const std::map<std::string, double>& per_dataset_em,
                     double best_avg_in_block);

/// Rounds to 2 decimals the way result tables report EM.
double round2(double v);

struct DiagnosticsConfig {
  /// Token-set Jaccard at or above this counts as a near copy.
  double near_copy_threshold = 0.8;
  /// Optional external judge for atomic-hop queries; the heuristic fallback
  /// (shorter than the question and below the Jaccard threshold) is used
  /// when absent.
  std::function<bool(const std::string& query, const std::string& question)>
      atomic_judge;
};

struct DiagnosticsReport {
  double first_query_copy_rate = 0.0;  // % of traces with >=1 search
  double atomic_hop_rate = 0.0;        // % of all search queries
  double avg_searches = 0.0;           // mean over all traces
  double correct_at_3 = 0.0;           // % answered correctly within 3 searches
};

/// Heuristic atomic-hop judgment used when no judge backend is configured.
bool atomic_query_heuristic(const std::string& query, const std::string& question,
                            double jaccard_threshold);

DiagnosticsReport compute_diagnostics(const std::vector<rollout::RolloutOutcome>& traces,
                                      const std::vector<std::vector<std::string>>& golds,
                                      const DiagnosticsConfig& config = {});

struct RewardBreakdown {
  int r_em = 0;   // exact-match correctness
  int r_evi = 0;  // some gold occurs in retrieved evidence
  int r_dup = 0;  // duplicate search queries after normalization
  double lambda_e = 0.0;
  double lambda_d = 0.0;
  double total = 0.0;  // r_em + lambda_e * r_evi - lambda_d * r_dup
};

RewardBreakdown score_reward(const rollout::RolloutOutcome& traj,
                             const std::vector<std::string>& golds, double lambda_e,
                             double lambda_d);

struct EvalExample {
  std::string example_id;
  std::string dataset;
  std::string question;
  std::vector<std::string> golds;
};

struct BenchmarkResult {
  EvalResult eval;
  DiagnosticsReport diagnostics;
  std::vector<rollout::RolloutOutcome> outcomes;  // in split order
};

/// Runs the split under the given bank mode and aggregates. Per-item failures
/// are recorded in the outcomes, never aborting the suite.
BenchmarkResult run_benchmark(const std::vector<EvalExample>& split,
                              const skillbank::SkillBankVersion& bank,
                              const rollout::BackendFactory& backend_for,
                              const env::Retriever& retriever,
                              const rollout::RolloutConfig& rollout_config,
                              const DiagnosticsConfig& diag_config = {},
                              int parallelism = 1);

}  // namespace skillagent::eval
