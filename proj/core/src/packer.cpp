#include "skillagent/packer.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "skillagent/rollout.hpp"
#include "skillagent/tags.hpp"
#include "skillagent/text.hpp"

namespace skillagent::packer {

namespace {

void require_packable(const trajectory::Trajectory& traj,
                      const skillbank::SkillBankVersion& bank,
                      const PackerConfig& config) {
  bool has_assistant_turn = false;
  for (const auto& step : traj.steps) {
    if (!step.action_text.empty() || !step.selection_text.empty()) {
      has_assistant_turn = true;
      break;
    }
  }
  if (!has_assistant_turn) {
    throw std::invalid_argument("pack: trajectory " + traj.example_id +
                                " has no assistant turns");
  }
  if (config.allow_unvalidated) return;
  auto report = trajectory::validate_trajectory(traj, bank);
  if (!report.accepted) {
    std::string failed;
    for (const auto& [name, check] : report.checks) {
      if (!check.passed) {
        if (!failed.empty()) failed += ", ";
        failed += name;
      }
    }
    throw std::invalid_argument("pack: trajectory " + traj.example_id +
                                " failed validation (" + failed +
                                "); pass allow_unvalidated to override");
  }
}

std::string target_kind(const tags::ParsedAction& action) {
  return action.kind == tags::ActionKind::Answer ? "answer" : "search";
}

std::string step_action_text(const rollout::TraceStep& step) {
  return step.action_text.empty() ? tags::render_action(step.action)
                                  : step.action_text;
}

std::string step_selection_text(const rollout::TraceStep& step) {
  if (!step.selection_text.empty()) return step.selection_text;
  return tags::render_selection(step.selection);
}

std::string stage1_system_prompt() {
  return "You answer questions with a search tool. Each turn emit "
         "<skill>...</skill> naming the skill you apply, followed by exactly "
         "one <search>query</search> or <answer>final answer</answer>. "
         "Search results arrive inside <information>...</information>.";
}

}  // namespace

SupervisionRecord pack_stage1(const trajectory::Trajectory& traj,
                              const skillbank::SkillBankVersion& bank,
                              const PackerConfig& config) {
  require_packable(traj, bank, config);

  SupervisionRecord record;
  record.example_id = traj.example_id;
  record.stage = 1;
  record.supervision_mode = traj.supervision_mode;

  std::string system =
      config.system_prompt.empty() ? stage1_system_prompt() : config.system_prompt;
  if (!config.stage1_hint.empty()) system += "\n" + config.stage1_hint;
  record.messages.push_back({Role::System, system});
  record.messages.push_back({Role::User, traj.question});

  const bool closure =
      traj.supervision_mode == trajectory::SupervisionMode::Closure;
  size_t last_answer_index = 0;
  for (const auto& step : traj.steps) {
    record.messages.push_back({Role::Assistant, step_action_text(step)});
    const size_t index = record.messages.size() - 1;
    const std::string kind = target_kind(step.action);
    double weight = kind == "answer"   ? config.stage1_answer_weight
                    : kind == "search" ? config.stage1_search_weight
                                       : config.stage1_other_weight;
    record.targets.push_back({index, true, weight, kind});
    if (kind == "answer") last_answer_index = index;
    if (step.retrieved) {
      record.messages.push_back(
          {Role::User, tags::render_information(*step.retrieved)});
    }
  }
  if (closure) {
    for (auto& target : record.targets) {
      if (target.index != last_answer_index) {
        target.supervised = false;
        target.weight = 0.0;
      }
    }
  }
  return record;
}

SupervisionRecord rewrite_stage2(const trajectory::Trajectory& traj,
                                 const skillbank::SkillBankVersion& bank,
                                 const PackerConfig& config) {
  require_packable(traj, bank, config);

  for (const auto& step : traj.steps) {
    for (const auto& id : step.selection.ids) {
      if (!bank.find(id)) {
        throw std::invalid_argument("rewrite_stage2: skill id '" + id +
                                    "' does not resolve against bank " +
                                    bank.label);
      }
    }
  }

  SupervisionRecord record;
  record.example_id = traj.example_id;
  record.stage = 2;
  record.supervision_mode = traj.supervision_mode;

  const std::string index_text = skillbank::render_index(bank);
  const std::string system = config.system_prompt.empty()
                                 ? rollout::default_system_prompt()
                                 : config.system_prompt;
  record.messages.push_back({Role::System, system});
  record.messages.push_back({Role::User, traj.question});
  record.messages.push_back({Role::User, index_text});

  const bool closure =
      traj.supervision_mode == trajectory::SupervisionMode::Closure;
  size_t last_answer_index = 0;
  for (const auto& step : traj.steps) {
    record.messages.push_back({Role::Assistant, step_selection_text(step)});
    record.targets.push_back({record.messages.size() - 1, true,
                              config.selection_weight, "selection"});

    // Persisted traces carry id-only card stubs; re-resolve bodies from the
    // bank unless the step recorded fully populated cards.
    bool stubs_only = step.cards_shown.empty();
    for (const auto& card : step.cards_shown) {
      if (card.summary.empty() && card.display_name.empty()) stubs_only = true;
    }
    const auto cards = stubs_only
                           ? skillbank::get_cards(bank, step.selection.ids).cards
                           : step.cards_shown;
    record.messages.push_back({Role::User, skillbank::render_cards(cards)});

    record.messages.push_back({Role::Assistant, step_action_text(step)});
    const size_t index = record.messages.size() - 1;
    const std::string kind = target_kind(step.action);
    double weight = kind == "answer"   ? config.stage2_answer_weight
                    : kind == "search" ? config.stage2_search_weight
                                       : config.stage2_other_weight;
    record.targets.push_back({index, true, weight, kind});
    if (kind == "answer") last_answer_index = index;
    if (step.retrieved) {
      // Mirror the runtime turn layout: the bank index follows every
      // information block.
      record.messages.push_back(
          {Role::User,
           tags::render_information(*step.retrieved) + "\n" + index_text});
    }
  }
  if (closure) {
    for (auto& target : record.targets) {
      if (target.index != last_answer_index) {
        target.supervised = false;
        target.weight = 0.0;
      }
    }
  }
  return record;
}

SupervisionRecord rewrite_stage2(const SupervisionRecord& source,
                                 const skillbank::SkillBankVersion& bank,
                                 const PackerConfig& config) {
  if (source.stage != 1) {
    throw std::invalid_argument("rewrite_stage2: record " + source.example_id +
                                " is not a stage-1 record");
  }
  std::string question;
  for (const auto& turn : source.messages) {
    if (turn.role == Role::User) {
      question = turn.content;
      break;
    }
  }

  SupervisionRecord record;
  record.example_id = source.example_id;
  record.stage = 2;
  record.supervision_mode = source.supervision_mode;

  const std::string index_text = skillbank::render_index(bank);
  const std::string system = config.system_prompt.empty()
                                 ? rollout::default_system_prompt()
                                 : config.system_prompt;
  record.messages.push_back({Role::System, system});
  record.messages.push_back({Role::User, question});
  record.messages.push_back({Role::User, index_text});

  const bool closure =
      record.supervision_mode == trajectory::SupervisionMode::Closure;
  size_t last_answer_index = 0;
  bool seen_question = false;
  for (const auto& turn : source.messages) {
    if (turn.role == Role::System) continue;
    if (turn.role == Role::User) {
      if (!seen_question) {
        seen_question = true;  // the question itself, already emitted
        continue;
      }
      // Information block: mirror the runtime layout by re-appending the index.
      record.messages.push_back({Role::User, turn.content + "\n" + index_text});
      continue;
    }

    auto parsed = tags::parse_action_turn(turn.content);
    if (!parsed.ok()) {
      throw std::invalid_argument("rewrite_stage2: action turn in record " +
                                  source.example_id + " is not parseable: " +
                                  parsed.error->detail);
    }
    for (const auto& id : (*parsed).skills) {
      if (!bank.find(id)) {
        throw std::invalid_argument("rewrite_stage2: skill id '" + id +
                                    "' does not resolve against bank " +
                                    bank.label);
      }
    }
    tags::SkillSelection selection{(*parsed).skills};
    record.messages.push_back(
        {Role::Assistant, tags::render_selection(selection)});
    record.targets.push_back({record.messages.size() - 1, true,
                              config.selection_weight, "selection"});

    const auto cards = skillbank::get_cards(bank, selection.ids).cards;
    record.messages.push_back({Role::User, skillbank::render_cards(cards)});

    record.messages.push_back({Role::Assistant, turn.content});
    const size_t index = record.messages.size() - 1;
    const std::string kind = target_kind(*parsed);
    double weight = kind == "answer"   ? config.stage2_answer_weight
                    : kind == "search" ? config.stage2_search_weight
                                       : config.stage2_other_weight;
    record.targets.push_back({index, true, weight, kind});
    if (kind == "answer") last_answer_index = index;
  }
  if (record.targets.empty()) {
    throw std::invalid_argument("rewrite_stage2: record " + source.example_id +
                                " has no assistant turns");
  }
  if (closure) {
    for (auto& target : record.targets) {
      if (target.index != last_answer_index) {
        target.supervised = false;
        target.weight = 0.0;
      }
    }
  }
  return record;
}

nlohmann::json record_to_json(const SupervisionRecord& record) {
  nlohmann::json doc;
  doc["example_id"] = record.example_id;
  doc["stage"] = record.stage;
  doc["supervision_mode"] =
      record.supervision_mode == trajectory::SupervisionMode::Closure ? "closure"
                                                                      : "full";
  doc["messages"] = nlohmann::json::array();
  for (const auto& turn : record.messages) {
    doc["messages"].push_back(
        {{"role", role_name(turn.role)}, {"content", turn.content}});
  }
  doc["targets"] = nlohmann::json::array();
  for (const auto& target : record.targets) {
    doc["targets"].push_back({{"index", target.index},
                              {"supervised", target.supervised},
                              {"weight", target.weight},
                              {"kind", target.kind}});
  }
  return doc;
}

SupervisionRecord record_from_json(const nlohmann::json& doc) {
  SupervisionRecord record;
  record.example_id = doc.value("example_id", "");
  record.stage = doc.value("stage", 1);
  record.supervision_mode =
      doc.value("supervision_mode", "full") == std::string("closure")
          ? trajectory::SupervisionMode::Closure
          : trajectory::SupervisionMode::Full;
  for (const auto& jt : doc.value("messages", nlohmann::json::array())) {
    record.messages.push_back({role_from_name(jt.at("role").get<std::string>()),
                               jt.at("content").get<std::string>()});
  }
  for (const auto& jt : doc.value("targets", nlohmann::json::array())) {
    record.targets.push_back({jt.at("index").get<size_t>(),
                              jt.at("supervised").get<bool>(),
                              jt.at("weight").get<double>(),
                              jt.at("kind").get<std::string>()});
  }
  return record;
}

namespace {

// Seeded FNV-1a so the train/eval split is stable across platforms and runs.
uint64_t seeded_hash(const std::string& key, uint64_t seed) {
  uint64_t h = 14695981039346656037ull ^ seed;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

ExportReport export_records(const std::vector<SupervisionRecord>& records,
                            const std::filesystem::path& dir,
                            const ExportConfig& config) {
  if (records.empty()) {
    throw std::invalid_argument("export_records: no records to export");
  }
  std::filesystem::create_directories(dir);
  ExportReport report;
  report.train_path = dir / "train.jsonl";
  report.eval_path = dir / "eval.jsonl";

  std::ofstream train(report.train_path);
  std::ofstream eval(report.eval_path);
  if (!train || !eval) {
    throw std::runtime_error("export_records: cannot write under " + dir.string());
  }

  // With an explicit eval_count, hold out whole examples in hash-rank order
  // until the eval split reaches the requested record count.
  std::map<std::string, size_t> records_per_example;
  std::set<std::string> eval_ids;
  if (config.eval_count > 0) {
    for (const auto& record : records) ++records_per_example[record.example_id];
    std::vector<std::string> ids;
    ids.reserve(records_per_example.size());
    for (const auto& [id, n] : records_per_example) ids.push_back(id);
    std::sort(ids.begin(), ids.end(),
              [&](const std::string& a, const std::string& b) {
                const uint64_t ha = seeded_hash(a, config.seed);
                const uint64_t hb = seeded_hash(b, config.seed);
                return ha != hb ? ha < hb : a < b;
              });
    size_t held = 0;
    for (const auto& id : ids) {
      if (held >= config.eval_count) break;
      eval_ids.insert(id);
      held += records_per_example[id];
    }
  }

  const uint64_t cutoff =
      static_cast<uint64_t>(config.eval_fraction * 10000.0);
  for (const auto& record : records) {
    const bool to_eval =
        config.eval_count > 0
            ? eval_ids.count(record.example_id) > 0
            : seeded_hash(record.example_id, config.seed) % 10000 < cutoff;
    const std::string split = to_eval ? "eval" : "train";
    (to_eval ? eval : train) << record_to_json(record).dump() << "\n";
    if (to_eval) {
      ++report.eval_records;
    } else {
      ++report.train_records;
    }
    for (const auto& target : record.targets) {
      if (target.supervised) ++report.target_counts[split][target.kind];
    }
  }

  nlohmann::json manifest;
  manifest["train_records"] = report.train_records;
  manifest["eval_records"] = report.eval_records;
  manifest["eval_fraction"] = config.eval_fraction;
  manifest["seed"] = config.seed;
  manifest["target_counts"] = report.target_counts;
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << "\n";
  return report;
}

}  // namespace skillagent::packer
