#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillagent/backend.hpp"
#include "skillagent/chat.hpp"
#include "skillagent/retriever.hpp"
#include "skillagent/skillbank.hpp"
#include "skillagent/tags.hpp"

namespace skillagent::rollout {

struct TraceStep {
  tags::SkillSelection selection;
  std::string selection_text;  // raw assistant text, for exact replay
  std::vector<skillbank::SkillCard> cards_shown;
  std::vector<std::string> unrecognized_ids;
  tags::ParsedAction action;
  std::string action_text;  // raw assistant text
  std::optional<std::vector<Passage>> retrieved;  // present iff action is Search
  std::optional<std::string> checkpoint;
};

struct RolloutOutcome {
  enum class Status { Answered, BudgetExhausted, InvalidAction, BackendFailure };

  Status status = Status::BudgetExhausted;
  std::string question;
  std::string final_answer;    // set when Answered
  std::string failure_reason;  // set for InvalidAction / BackendFailure
  std::vector<TraceStep> trace;

  size_t search_count() const;
};

const char* status_name(RolloutOutcome::Status s);

struct RolloutConfig {
  int budget = 5;  // counts search actions
  int top_k = 3;
  bool strict_tags = false;
  std::string system_prompt;  // empty means no system turn
};

/// Default instruction preamble describing the select-read-act protocol.
std::string default_system_prompt();

RolloutOutcome run_rollout(const std::string& question,
                           const skillbank::SkillBankVersion& bank,
                           env::ChatBackend& policy, const env::Retriever& retriever,
                           const RolloutConfig& config);

/// Per-question backend factory so scripted runs stay deterministic under
/// any parallelism.
using BackendFactory = std::function<std::unique_ptr<env::ChatBackend>(size_t)>;

std::vector<RolloutOutcome> run_batch(const std::vector<std::string>& questions,
                                      const skillbank::SkillBankVersion& bank,
                                      const BackendFactory& backend_for,
                                      const env::Retriever& retriever,
                                      const RolloutConfig& config, int parallelism = 1);

/// Which prompt a reconstruction should stop at.
enum class PromptPoint { BeforeSelection, BeforeAction };

/// Rebuilds, byte-exactly, the chat history the policy saw at the given step.
/// `step` is 0-based; steps before it must carry raw turn texts and retrievals.
ChatHistory reconstruct_history(const std::string& question,
                                const skillbank::SkillBankVersion& bank,
                                const std::vector<TraceStep>& steps, size_t step,
                                PromptPoint point, const RolloutConfig& config);

nlohmann::json outcome_to_json(const RolloutOutcome& outcome);
RolloutOutcome outcome_from_json(const nlohmann::json& doc);

void write_trace_file(const std::vector<RolloutOutcome>& outcomes,
                      const std::filesystem::path& path);
std::vector<RolloutOutcome> read_trace_file(const std::filesystem::path& path);

struct ReplayStepReport {
  std::string query;
  std::vector<std::string> expected_doc_ids;
  std::vector<std::string> actual_doc_ids;
  bool match = false;
};

struct ReplayReport {
  std::vector<ReplayStepReport> steps;
  bool all_match = true;
  std::string final_answer;
};

/// Re-executes each recorded search of a trace fixture against a live
/// retriever and reports per-step doc-id agreement.
ReplayReport replay_trace(const RolloutOutcome& fixture, const env::Retriever& retriever,
                          int top_k = 3);

}  // namespace skillagent::rollout
