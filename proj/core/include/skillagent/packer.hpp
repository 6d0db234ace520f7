#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillagent/chat.hpp"
#include "skillagent/skillbank.hpp"
#include "skillagent/trajectory.hpp"

namespace skillagent::packer {

/// One supervisable assistant turn inside a record. `index` points into the
/// record's message list. Unsupervised turns carry weight 0.
struct Target {
  size_t index = 0;
  bool supervised = false;
  double weight = 0.0;
  std::string kind;  // "selection" | "search" | "answer" | "other"

  bool operator==(const Target&) const = default;
};

struct SupervisionRecord {
  std::string example_id;
  int stage = 1;  // 1 = flat action trace, 2 = two-phase select-read-act
  trajectory::SupervisionMode supervision_mode = trajectory::SupervisionMode::Full;
  ChatHistory messages;
  std::vector<Target> targets;  // one per assistant turn, message order
};

struct PackerConfig {
  double stage1_answer_weight = 2.5;
  double stage1_search_weight = 0.8;
  double stage1_other_weight = 1.0;
  double stage2_answer_weight = 2.0;
  double stage2_search_weight = 0.8;
  double stage2_other_weight = 1.0;
  double selection_weight = 1.0;  // fixed across stages
  /// Runtime instruction preamble; empty selects the protocol default.
  std::string system_prompt;
  /// Optional candidate-skill hint appended to the stage-1 system prompt.
  /// Stage 2 always regenerates its prompt without hints.
  std::string stage1_hint;
  /// Packing an unvalidated trajectory throws unless set.
  bool allow_unvalidated = false;
};

/// Flat single-phase record: the action turns as emitted, information blocks
/// between them, no selection or card-context turns. Closure mode supervises
/// only the final answer turn.
SupervisionRecord pack_stage1(const trajectory::Trajectory& traj,
                              const skillbank::SkillBankVersion& bank,
                              const PackerConfig& config = {});

/// Two-phase rewrite matching the runtime wire format byte for byte: each
/// action gains a preceding selection turn and card-context user turn, and
/// every information block carries the bank index. Throws on selection ids
/// that do not resolve against the bank.
SupervisionRecord rewrite_stage2(const trajectory::Trajectory& traj,
                                 const skillbank::SkillBankVersion& bank,
                                 const PackerConfig& config = {});

/// Same rewrite, but driven from a stage-I record: the selection for each
/// inserted turn is recovered by parsing the skill tag of the action turn.
/// Requires every action turn to carry a parseable, resolvable skill tag.
SupervisionRecord rewrite_stage2(const SupervisionRecord& record,
                                 const skillbank::SkillBankVersion& bank,
                                 const PackerConfig& config = {});

nlohmann::json record_to_json(const SupervisionRecord& record);
SupervisionRecord record_from_json(const nlohmann::json& doc);

struct ExportConfig {
  double eval_fraction = 0.1;  // per-example_id holdout share
  /// When nonzero, overrides eval_fraction: example ids are ranked by seeded
  /// hash and held out until the eval split reaches this many records.
  size_t eval_count = 0;
  uint64_t seed = 0;  // split hashing seed
};

struct ExportReport {
  std::filesystem::path train_path;
  std::filesystem::path eval_path;
  size_t train_records = 0;
  size_t eval_records = 0;
  /// Supervised-target counts per kind, per split ("train"/"eval").
  std::map<std::string, std::map<std::string, size_t>> target_counts;
};

/// Writes train/eval JSONL plus a manifest.json with the counts. The split is
/// a deterministic seeded hash of example_id, so all records of one example
/// land on the same side. Throws on an empty record list.
ExportReport export_records(const std::vector<SupervisionRecord>& records,
                            const std::filesystem::path& dir,
                            const ExportConfig& config = {});

}  // namespace skillagent::packer
