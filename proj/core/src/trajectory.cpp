#include "skillagent/trajectory.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "skillagent/eval.hpp"
#include "skillagent/text.hpp"

namespace skillagent::trajectory {

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kStopwords = {
      "a",   "an",  "the", "is",  "was",  "were", "are", "be",   "been",
      "of",  "in",  "on",  "at",  "to",   "for",  "and", "or",   "it",
      "he",  "she", "they", "answer", "final", "so", "thus", "therefore"};
  return kStopwords;
}

std::string normalized_query(const std::string& q) {
  return text::join(text::tokenize(q), " ");
}

bool is_answer_step(const rollout::TraceStep& step) {
  return step.action.kind == tags::ActionKind::Answer;
}

}  // namespace

tags::ParsedAction normalize_teacher_action(const TeacherAction& action) {
  if (action.primary_skill.empty()) {
    throw std::invalid_argument("teacher action without a primary skill");
  }
  tags::ParsedAction parsed;
  parsed.skills.push_back(action.primary_skill);
  for (const auto& s : action.support_skills) parsed.skills.push_back(s);
  const std::string payload = text::trim(action.query_or_draft);
  switch (action.action_type) {
    case TeacherAction::Type::Search:
    case TeacherAction::Type::Verify:
      // verify's query is its retrieval probe; both execute as Search
      parsed.kind = tags::ActionKind::Search;
      break;
    case TeacherAction::Type::Answer:
      if (payload.empty()) {
        throw std::invalid_argument("teacher answer action with an empty draft");
      }
      parsed.kind = tags::ActionKind::Answer;
      break;
  }
  parsed.payload = payload;
  return parsed;
}

bool ValidationReport::passed(const std::string& name) const {
  auto it = checks.find(name);
  return it != checks.end() && it->second.passed;
}

ValidationReport validate_trajectory(const Trajectory& traj,
                                     const skillbank::SkillBankVersion& bank) {
  ValidationReport report;
  auto add = [&](const std::string& name, bool ok, std::string reason) {
    report.checks[name] = CheckResult{ok, ok ? "" : std::move(reason)};
  };

  bool correct = traj.final_answer.has_value() &&
                 eval::exact_match(*traj.final_answer, traj.gold_answers) == 1;
  add("answer_correct", correct, "final answer missing or not an exact match");

  size_t searches = 0;
  for (const auto& step : traj.steps)
    if (step.action.kind == tags::ActionKind::Search) ++searches;
  add("has_search", searches >= 1, "no retrieval step");

  std::vector<std::string> illegal;
  for (const auto& step : traj.steps) {
    for (const auto& id : step.action.skills) {
      if (!bank.find(id)) illegal.push_back(id);
    }
    for (const auto& id : step.selection.ids) {
      if (!bank.find(id)) illegal.push_back(id);
    }
  }
  add("legal_skills", illegal.empty(),
      illegal.empty() ? "" : "unknown skill ids: " + text::join(illegal, ", "));

  bool support_primary_violation = false;
  std::string violating_id;
  for (size_t i = 0; i < traj.steps.size(); ++i) {
    const auto& step = traj.steps[i];
    if (is_answer_step(step)) continue;  // only pre-answer turns constrained
    if (step.action.skills.empty()) continue;
    const auto* card = bank.find(step.action.skills.front());
    if (card && card->support_only) {
      support_primary_violation = true;
      violating_id = card->id;
      break;
    }
  }
  add("support_only_primary", !support_primary_violation,
      "support-only skill used as primary on a pre-answer turn: " + violating_id);

  size_t answer_steps = 0;
  for (const auto& step : traj.steps)
    if (is_answer_step(step)) ++answer_steps;
  bool answer_last = answer_steps == 1 && !traj.steps.empty() &&
                     is_answer_step(traj.steps.back());
  add("answer_last", answer_last, "expected exactly one final answer turn");

  bool consistent = true;
  std::string prev_query;
  for (const auto& step : traj.steps) {
    if (step.action.kind != tags::ActionKind::Search) continue;
    auto norm = normalized_query(step.action.payload);
    if (!prev_query.empty() && norm == prev_query) {
      consistent = false;
      break;
    }
    prev_query = norm;
  }
  add("route_consistency", consistent, "consecutive identical search queries");

  report.accepted = true;
  for (const auto& [_, check] : report.checks) report.accepted &= check.passed;
  return report;
}

namespace {

bool trace_complete(const Trajectory& traj) {
  if (traj.steps.empty()) return false;
  for (const auto& step : traj.steps) {
    if (step.selection_text.empty() || step.action_text.empty()) return false;
    if (step.action.kind == tags::ActionKind::Search && !step.retrieved) return false;
  }
  return true;
}

// Larger keys win; source_order breaks ties (earlier wins).
std::array<int, 6> quality_key(const Trajectory& traj, const ValidationReport& report) {
  return {report.accepted ? 1 : 0,
          traj.status == rollout::RolloutOutcome::Status::Answered ? 1 : 0,
          traj.final_answer && !traj.final_answer->empty() ? 1 : 0,
          report.passed("legal_skills") ? 1 : 0,
          report.passed("route_consistency") ? 1 : 0,
          trace_complete(traj) ? 1 : 0};
}

}  // namespace

std::vector<Trajectory> dedup_keep_best(const std::vector<Trajectory>& trajs,
                                        const skillbank::SkillBankVersion& bank) {
  std::unordered_map<std::string, size_t> best;  // example_id -> index into trajs
  std::vector<std::string> id_order;
  for (size_t i = 0; i < trajs.size(); ++i) {
    const auto& traj = trajs[i];
    auto it = best.find(traj.example_id);
    if (it == best.end()) {
      best[traj.example_id] = i;
      id_order.push_back(traj.example_id);
      continue;
    }
    const auto& incumbent = trajs[it->second];
    auto key_new = quality_key(traj, validate_trajectory(traj, bank));
    auto key_old = quality_key(incumbent, validate_trajectory(incumbent, bank));
    if (key_new > key_old ||
        (key_new == key_old && traj.source_order < incumbent.source_order)) {
      it->second = i;
    }
  }
  std::vector<Trajectory> out;
  out.reserve(id_order.size());
  for (const auto& id : id_order) out.push_back(trajs[best[id]]);
  std::sort(out.begin(), out.end(), [](const Trajectory& a, const Trajectory& b) {
    return a.source_order < b.source_order;
  });
  return out;
}

std::string finalize_answer_heuristic(const std::string& draft,
                                      const std::vector<Passage>& evidence) {
  const std::string trimmed = text::trim(draft);
  if (trimmed.empty()) return trimmed;

  // Token byte ranges over the raw draft so spans keep internal punctuation
  // ("Louis, Grand Dauphin").
  struct Token {
    size_t begin, end;
    std::string lower;
  };
  std::vector<Token> tokens;
  size_t i = 0;
  while (i < trimmed.size()) {
    if (std::isalnum(static_cast<unsigned char>(trimmed[i]))) {
      size_t begin = i;
      std::string lower;
      while (i < trimmed.size() && std::isalnum(static_cast<unsigned char>(trimmed[i]))) {
        lower.push_back(static_cast<char>(std::tolower(
            static_cast<unsigned char>(trimmed[i]))));
        ++i;
      }
      tokens.push_back({begin, i, std::move(lower)});
    } else {
      ++i;
    }
  }
  if (tokens.empty()) return trimmed;

  std::vector<std::string> haystacks;
  haystacks.reserve(evidence.size());
  for (const auto& p : evidence) {
    haystacks.push_back(text::to_lower(p.title + ". " + p.text));
  }

  for (size_t len = 1; len <= tokens.size(); ++len) {
    std::string best_span;
    for (size_t start = 0; start + len <= tokens.size(); ++start) {
      bool content = false;
      for (size_t t = start; t < start + len; ++t) {
        if (!stopwords().count(tokens[t].lower)) {
          content = true;
          break;
        }
      }
      if (!content) continue;
      std::string span = trimmed.substr(tokens[start].begin,
                                        tokens[start + len - 1].end - tokens[start].begin);
      std::string span_lower = text::to_lower(span);
      bool supported = false;
      for (const auto& hay : haystacks) {
        if (hay.find(span_lower) != std::string::npos) {
          supported = true;
          break;
        }
      }
      if (supported && (best_span.empty() || span.size() < best_span.size())) {
        best_span = span;
      }
    }
    if (!best_span.empty()) return best_span;
  }
  return trimmed;
}

std::string finalize_answer(const std::string& draft,
                            const std::vector<Passage>& evidence,
                            env::ChatBackend* finalizer) {
  if (!finalizer) return finalize_answer_heuristic(draft, evidence);
  ChatHistory history;
  history.push_back(
      {Role::System,
       "Normalize the draft answer to the shortest answer span explicitly "
       "supported by the evidence. Reply with the span only."});
  std::string user = "Draft answer: " + draft + "\n\nEvidence:\n";
  for (const auto& p : evidence) user += "- " + p.title + ". " + p.text + "\n";
  history.push_back({Role::User, user});
  return text::trim(finalizer->complete(history, {}));
}

nlohmann::json manifest_entry_to_json(const ManifestEntry& entry) {
  nlohmann::json doc;
  doc["example_id"] = entry.example_id;
  doc["dataset"] = entry.dataset;
  doc["question"] = entry.question;
  doc["gold_answers"] = entry.gold_answers;
  nlohmann::json meta;
  if (entry.question_type) meta["question_type"] = *entry.question_type;
  if (entry.hop_count) meta["hop_count"] = *entry.hop_count;
  meta["cues"] = entry.cue_flags;
  doc["metadata"] = std::move(meta);
  doc["candidate_primary_skills"] = entry.candidate_primary_skills;
  doc["suggested_support_skills"] = entry.suggested_support_skills;
  doc["source"] = entry.source;
  return doc;
}

ManifestEntry manifest_entry_from_json(const nlohmann::json& doc) {
  ManifestEntry entry;
  entry.example_id = doc.at("example_id").get<std::string>();
  entry.dataset = doc.value("dataset", "");
  entry.question = doc.at("question").get<std::string>();
  entry.gold_answers = doc.value("gold_answers", std::vector<std::string>{});
  if (doc.contains("metadata")) {
    const auto& meta = doc["metadata"];
    if (meta.contains("question_type")) {
      entry.question_type = meta["question_type"].get<std::string>();
    }
    if (meta.contains("hop_count")) entry.hop_count = meta["hop_count"].get<int>();
    if (meta.contains("cues")) {
      entry.cue_flags = meta["cues"].get<std::map<std::string, bool>>();
    }
  }
  entry.candidate_primary_skills =
      doc.value("candidate_primary_skills", std::vector<std::string>{});
  entry.suggested_support_skills =
      doc.value("suggested_support_skills", std::vector<std::string>{});
  entry.source = doc.value("source", "pool");
  return entry;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    entries.push_back(manifest_entry_from_json(nlohmann::json::parse(line)));
  }
  return entries;
}

void save_manifest(const std::vector<ManifestEntry>& entries,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  for (const auto& e : entries) out << manifest_entry_to_json(e).dump() << "\n";
}

namespace {

std::optional<TeacherAction> parse_teacher_json(const std::string& body,
                                                std::string& error) {
  std::string payload = text::trim(body);
  auto first = payload.find('{');
  auto last = payload.rfind('}');
  if (first == std::string::npos || last == std::string::npos || last < first) {
    error = "no JSON object in teacher reply";
    return std::nullopt;
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(payload.substr(first, last - first + 1));
  } catch (const nlohmann::json::exception& e) {
    error = e.what();
    return std::nullopt;
  }
  TeacherAction action;
  try {
    action.primary_skill = doc.at("primary_skill").get<std::string>();
    action.support_skills = doc.value("support_skills", std::vector<std::string>{});
    const auto type = doc.at("action_type").get<std::string>();
    if (type == "search") {
      action.action_type = TeacherAction::Type::Search;
    } else if (type == "verify") {
      action.action_type = TeacherAction::Type::Verify;
    } else if (type == "answer") {
      action.action_type = TeacherAction::Type::Answer;
    } else {
      error = "unknown action_type: " + type;
      return std::nullopt;
    }
    if (doc.contains("query_or_draft")) {
      action.query_or_draft = doc["query_or_draft"].get<std::string>();
    } else if (doc.contains("query")) {
      action.query_or_draft = doc["query"].get<std::string>();
    } else if (doc.contains("draft")) {
      action.query_or_draft = doc["draft"].get<std::string>();
    }
    action.checkpoint = doc.value("checkpoint", "");
  } catch (const nlohmann::json::exception& e) {
    error = e.what();
    return std::nullopt;
  }
  return action;
}

std::string teacher_system_prompt() {
  return "You are a search teacher. At each turn reply with exactly one JSON "
         "object: {\"primary_skill\": id, \"support_skills\": [ids], "
         "\"action_type\": \"search\"|\"verify\"|\"answer\", "
         "\"query_or_draft\": text, \"checkpoint\": text}. Use only skill ids "
         "from the provided index.";
}

}  // namespace

Trajectory synthesize(const ManifestEntry& entry,
                      const skillbank::SkillBankVersion& bank,
                      env::ChatBackend& teacher, const env::Retriever& retriever,
                      env::ChatBackend* finalizer, const SynthesisConfig& config) {
  Trajectory traj;
  traj.example_id = entry.example_id;
  traj.dataset = entry.dataset;
  traj.question = entry.question;
  traj.gold_answers = entry.gold_answers;
  traj.question_type = entry.question_type;
  traj.hop_count = entry.hop_count;
  traj.cue_flags = entry.cue_flags;

  ChatHistory history;
  history.push_back({Role::System, teacher_system_prompt()});
  std::string user = "Question: " + entry.question + "\n\n" +
                     skillbank::render_index(bank);
  if (!entry.candidate_primary_skills.empty()) {
    user += "\nCandidate primary skills: " +
            text::join(entry.candidate_primary_skills, ", ");
  }
  if (!entry.suggested_support_skills.empty()) {
    user += "\nSuggested support skills: " +
            text::join(entry.suggested_support_skills, ", ");
  }
  history.push_back({Role::User, user});

  std::vector<Passage> evidence;
  std::unordered_set<std::string> evidence_ids;
  int searches = 0;

  while (true) {
    std::string reply;
    std::string error;
    std::optional<TeacherAction> action;
    for (int attempt = 0; attempt < 2 && !action; ++attempt) {
      try {
        reply = teacher.complete(history, {});
      } catch (const std::exception& e) {
        traj.status = rollout::RolloutOutcome::Status::BackendFailure;
        traj.failure_note = e.what();
        return traj;
      }
      action = parse_teacher_json(reply, error);
      if (!action && attempt == 0) {
        history.push_back({Role::Assistant, reply});
        history.push_back({Role::User,
                           "That was not a valid action object (" + error +
                               "). Reply with exactly one JSON object."});
      }
    }
    if (!action) {
      traj.status = rollout::RolloutOutcome::Status::BackendFailure;
      traj.failure_note = "teacher emitted malformed action JSON: " + error;
      return traj;
    }
    history.push_back({Role::Assistant, reply});

    tags::ParsedAction parsed;
    try {
      parsed = normalize_teacher_action(*action);
    } catch (const std::exception& e) {
      traj.status = rollout::RolloutOutcome::Status::InvalidAction;
      traj.failure_note = e.what();
      return traj;
    }

    rollout::TraceStep step;
    step.selection.ids = parsed.skills;
    step.selection_text = tags::render_selection(step.selection);
    auto lookup = skillbank::get_cards(bank, step.selection.ids);
    step.cards_shown = lookup.cards;
    step.unrecognized_ids = lookup.unrecognized;
    if (!action->checkpoint.empty()) step.checkpoint = action->checkpoint;

    if (parsed.kind == tags::ActionKind::Answer) {
      const std::string final =
          finalize_answer(parsed.payload, evidence, finalizer);
      step.action = parsed;
      step.action.payload = final;
      step.action_text = tags::render_action(step.action);
      traj.steps.push_back(std::move(step));
      traj.status = rollout::RolloutOutcome::Status::Answered;
      traj.final_answer = final;
      return traj;
    }

    std::vector<Passage> retrieved;
    try {
      retrieved = retriever.retrieve(parsed.payload, config.top_k);
    } catch (const std::exception& e) {
      traj.status = rollout::RolloutOutcome::Status::BackendFailure;
      traj.failure_note = std::string("retriever: ") + e.what();
      return traj;
    }
    step.action = parsed;
    step.action_text = tags::render_action(parsed);
    step.retrieved = retrieved;
    traj.steps.push_back(std::move(step));
    for (const auto& p : retrieved) {
      if (evidence_ids.insert(p.doc_id).second) evidence.push_back(p);
    }
    if (!retrieved.empty()) {
      history.push_back({Role::User, tags::render_information(retrieved)});
    } else {
      history.push_back({Role::User, "The search returned no results."});
    }
    if (++searches >= config.budget) {
      traj.status = rollout::RolloutOutcome::Status::BudgetExhausted;
      return traj;
    }
  }
}

Trajectory as_closure(const Trajectory& traj) {
  Trajectory closure = traj;
  closure.supervision_mode = SupervisionMode::Closure;
  return closure;
}

nlohmann::json trajectory_to_json(const Trajectory& traj) {
  rollout::RolloutOutcome outcome;
  outcome.question = traj.question;
  outcome.status = traj.status;
  if (traj.final_answer) outcome.final_answer = *traj.final_answer;
  outcome.trace = traj.steps;
  nlohmann::json doc = rollout::outcome_to_json(outcome);
  doc["example_id"] = traj.example_id;
  doc["dataset"] = traj.dataset;
  doc["gold_answers"] = traj.gold_answers;
  nlohmann::json meta;
  if (traj.question_type) meta["question_type"] = *traj.question_type;
  if (traj.hop_count) meta["hop_count"] = *traj.hop_count;
  meta["cues"] = traj.cue_flags;
  doc["metadata"] = std::move(meta);
  doc["supervision_mode"] =
      traj.supervision_mode == SupervisionMode::Closure ? "closure" : "full";
  doc["source_order"] = traj.source_order;
  if (!traj.failure_note.empty()) doc["failure_note"] = traj.failure_note;
  return doc;
}

Trajectory trajectory_from_json(const nlohmann::json& doc) {
  auto outcome = rollout::outcome_from_json(doc);
  Trajectory traj;
  traj.question = outcome.question;
  traj.status = outcome.status;
  if (outcome.status == rollout::RolloutOutcome::Status::Answered) {
    traj.final_answer = outcome.final_answer;
  }
  traj.steps = std::move(outcome.trace);
  traj.example_id = doc.value("example_id", "");
  traj.dataset = doc.value("dataset", "");
  traj.gold_answers = doc.value("gold_answers", std::vector<std::string>{});
  if (doc.contains("metadata")) {
    const auto& meta = doc["metadata"];
    if (meta.contains("question_type")) {
      traj.question_type = meta["question_type"].get<std::string>();
    }
    if (meta.contains("hop_count")) traj.hop_count = meta["hop_count"].get<int>();
    if (meta.contains("cues")) {
      traj.cue_flags = meta["cues"].get<std::map<std::string, bool>>();
    }
  }
  traj.supervision_mode = doc.value("supervision_mode", "full") == std::string("closure")
                              ? SupervisionMode::Closure
                              : SupervisionMode::Full;
  traj.source_order = doc.value("source_order", 0);
  traj.failure_note = doc.value("failure_note", "");
  return traj;
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file: " + path.string());
  std::vector<Trajectory> trajs;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    trajs.push_back(trajectory_from_json(nlohmann::json::parse(line)));
  }
  return trajs;
}

void save_trajectories(const std::vector<Trajectory>& trajs,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory file: " + path.string());
  for (const auto& t : trajs) out << trajectory_to_json(t).dump() << "\n";
}

}  // namespace skillagent::trajectory
