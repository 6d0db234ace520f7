#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillagent/backend.hpp"
#include "skillagent/retriever.hpp"
#include "skillagent/rollout.hpp"
#include "skillagent/skillbank.hpp"
#include "skillagent/tags.hpp"

namespace skillagent::trajectory {

enum class SupervisionMode { Full, Closure };

struct Trajectory {
  std::string example_id;
  std::string dataset;
  std::string question;
  std::vector<std::string> gold_answers;
  std::vector<rollout::TraceStep> steps;
  std::optional<std::string> final_answer;  // present iff status is Answered
  rollout::RolloutOutcome::Status status = rollout::RolloutOutcome::Status::Answered;
  std::optional<std::string> question_type;
  std::optional<int> hop_count;
  std::map<std::string, bool> cue_flags;
  SupervisionMode supervision_mode = SupervisionMode::Full;
  size_t source_order = 0;  // position in the source pool; dedup tie-break
  std::string failure_note;  // diagnostic trajectories only
};

struct TeacherAction {
  enum class Type { Search, Verify, Answer };

  std::string primary_skill;
  std::vector<std::string> support_skills;
  Type action_type = Type::Search;
  std::string query_or_draft;
  std::string checkpoint;
};

/// Maps the teacher's internal action space onto the runtime tags: search and
/// verify both execute as Search (verify's query is its retrieval probe),
/// answer maps to Answer. Throws on an answer with an empty draft.
tags::ParsedAction normalize_teacher_action(const TeacherAction& action);

struct CheckResult {
  bool passed = false;
  std::string reason;
};

struct ValidationReport {
  bool accepted = false;  // conjunction of all checks
  std::map<std::string, CheckResult> checks;

  bool passed(const std::string& name) const;
};

/// Executable canonical-trajectory criteria: exact-match correctness, at
/// least one search, legal skill identifiers, no support-only primary on a
/// pre-answer turn, a single final answer turn, and route consistency
/// (no two consecutive identical normalized queries).
ValidationReport validate_trajectory(const Trajectory& traj,
                                     const skillbank::SkillBankVersion& bank);

/// One trajectory per example_id, keeping the best row by: validation
/// success, answered status, non-empty final answer, legal skills, route
/// consistency, trace completeness; ties broken by earliest source.
std::vector<Trajectory> dedup_keep_best(const std::vector<Trajectory>& trajs,
                                        const skillbank::SkillBankVersion& bank);

/// Shortest supported answer span: the smallest token span of the draft that
/// occurs verbatim (case-insensitive) in the evidence and is not made of
/// stopwords only; falls back to the trimmed draft. Idempotent.
std::string finalize_answer_heuristic(const std::string& draft,
                                      const std::vector<Passage>& evidence);

/// Uses the finalizer backend when given, the heuristic otherwise.
std::string finalize_answer(const std::string& draft,
                            const std::vector<Passage>& evidence,
                            env::ChatBackend* finalizer);

struct ManifestEntry {
  std::string example_id;
  std::string dataset;
  std::string question;
  std::vector<std::string> gold_answers;
  std::optional<std::string> question_type;
  std::optional<int> hop_count;
  std::map<std::string, bool> cue_flags;
  std::vector<std::string> candidate_primary_skills;
  std::vector<std::string> suggested_support_skills;
  std::string source = "pool";  // "pool" | "failure-replay"
};

nlohmann::json manifest_entry_to_json(const ManifestEntry& entry);
ManifestEntry manifest_entry_from_json(const nlohmann::json& doc);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::vector<ManifestEntry>& entries,
                   const std::filesystem::path& path);

struct SynthesisConfig {
  int budget = 5;  // counts retrieval probes (search and verify)
  int top_k = 3;
};

/// Drives a structured-action teacher through the select-read-act
/// environment rules. Failures yield diagnostic trajectories rather than
/// throwing; the failure is recorded on the trajectory.
Trajectory synthesize(const ManifestEntry& entry,
                      const skillbank::SkillBankVersion& bank,
                      env::ChatBackend& teacher, const env::Retriever& retriever,
                      env::ChatBackend* finalizer, const SynthesisConfig& config);

/// Closure-focused copy: same steps, only the final assistant turn will be
/// supervised by the packer.
Trajectory as_closure(const Trajectory& traj);

nlohmann::json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& doc);
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path);
void save_trajectories(const std::vector<Trajectory>& trajs,
                       const std::filesystem::path& path);

}  // namespace skillagent::trajectory
