#include "skillagent/rollout.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include "skillagent/text.hpp"

namespace skillagent::rollout {

namespace {

const std::vector<std::string> kSelectionStops = {"</select_skill>"};
const std::vector<std::string> kActionStops = {"</search>", "</answer>"};

std::string information_turn(const std::vector<Passage>& passages,
                             const std::string& index_text) {
  // The bank index is re-appended after every information block so the
  // policy can re-route at the next selection turn.
  return tags::render_information(passages) + "\n" + index_text;
}

}  // namespace

size_t RolloutOutcome::search_count() const {
  size_t n = 0;
  for (const auto& step : trace)
    if (step.action.kind == tags::ActionKind::Search) ++n;
  return n;
}

const char* status_name(RolloutOutcome::Status s) {
  switch (s) {
    case RolloutOutcome::Status::Answered: return "answered";
    case RolloutOutcome::Status::BudgetExhausted: return "budget-exhausted";
    case RolloutOutcome::Status::InvalidAction: return "invalid-action";
    case RolloutOutcome::Status::BackendFailure: return "backend-failure";
  }
  return "unknown";
}

std::string default_system_prompt() {
  return "You answer questions with a search tool. Before each action, emit "
         "<select_skill>...</select_skill> with one or more skill ids from the "
         "skill index. After reading the returned skill cards, emit "
         "<skill>...</skill> followed by exactly one <search>query</search> or "
         "<answer>final answer</answer>.";
}

RolloutOutcome run_rollout(const std::string& question,
                           const skillbank::SkillBankVersion& bank,
                           env::ChatBackend& policy, const env::Retriever& retriever,
                           const RolloutConfig& config) {
  RolloutOutcome outcome;
  outcome.question = question;
  if (config.budget < 1) {
    outcome.status = RolloutOutcome::Status::BackendFailure;
    outcome.failure_reason = "budget must be >= 1";
    return outcome;
  }

  const std::string index_text = skillbank::render_index(bank);
  tags::ParseOptions popts;
  popts.strict = config.strict_tags;

  ChatHistory history;
  if (!config.system_prompt.empty()) {
    history.push_back({Role::System, config.system_prompt});
  }
  history.push_back({Role::User, question});
  history.push_back({Role::User, index_text});

  int searches = 0;
  while (true) {
    std::string sel_text;
    try {
      sel_text = policy.complete(history, kSelectionStops);
    } catch (const std::exception& e) {
      outcome.status = RolloutOutcome::Status::BackendFailure;
      outcome.failure_reason = e.what();
      return outcome;
    }
    auto sel = tags::parse_selection_turn(sel_text, popts);
    if (!sel.ok()) {
      outcome.status = RolloutOutcome::Status::InvalidAction;
      outcome.failure_reason =
          std::string("selection turn: ") + tags::to_string(sel.error->code);
      return outcome;
    }
    history.push_back({Role::Assistant, sel_text});

    auto lookup = skillbank::get_cards(bank, sel.value->ids);
    history.push_back({Role::User, skillbank::render_cards(lookup.cards)});

    std::string act_text;
    try {
      act_text = policy.complete(history, kActionStops);
    } catch (const std::exception& e) {
      outcome.status = RolloutOutcome::Status::BackendFailure;
      outcome.failure_reason = e.what();
      return outcome;
    }
    auto action = tags::parse_action_turn(act_text, popts);
    if (!action.ok()) {
      outcome.status = RolloutOutcome::Status::InvalidAction;
      outcome.failure_reason =
          std::string("action turn: ") + tags::to_string(action.error->code);
      return outcome;
    }
    history.push_back({Role::Assistant, act_text});

    TraceStep step;
    step.selection = *sel.value;
    step.selection_text = sel_text;
    step.cards_shown = lookup.cards;
    step.unrecognized_ids = lookup.unrecognized;
    step.action = *action.value;
    step.action_text = act_text;

    if (action.value->kind == tags::ActionKind::Answer) {
      outcome.trace.push_back(std::move(step));
      outcome.status = RolloutOutcome::Status::Answered;
      outcome.final_answer = action.value->payload;
      return outcome;
    }

    std::vector<Passage> retrieved;
    try {
      retrieved = retriever.retrieve(action.value->payload, config.top_k);
    } catch (const std::exception& e) {
      outcome.status = RolloutOutcome::Status::BackendFailure;
      outcome.failure_reason = std::string("retriever: ") + e.what();
      return outcome;
    }
    if (retrieved.empty()) {
      // The wire format requires >=1 passage; report the miss as text.
      Passage miss;
      miss.doc_id = "no-results";
      miss.title = "No results";
      miss.text = "The search returned no matching documents.";
      retrieved.push_back(std::move(miss));
    }
    history.push_back({Role::User, information_turn(retrieved, index_text)});
    step.retrieved = std::move(retrieved);
    outcome.trace.push_back(std::move(step));
    ++searches;
    if (searches >= config.budget) {
      outcome.status = RolloutOutcome::Status::BudgetExhausted;
      return outcome;
    }
  }
}

std::vector<RolloutOutcome> run_batch(const std::vector<std::string>& questions,
                                      const skillbank::SkillBankVersion& bank,
                                      const BackendFactory& backend_for,
                                      const env::Retriever& retriever,
                                      const RolloutConfig& config, int parallelism) {
  std::vector<RolloutOutcome> outcomes(questions.size());
  if (questions.empty()) return outcomes;
  parallelism = std::max(1, parallelism);

  auto worker = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < questions.size(); i += stride) {
      try {
        auto backend = backend_for(i);
        outcomes[i] = run_rollout(questions[i], bank, *backend, retriever, config);
      } catch (const std::exception& e) {
        outcomes[i].question = questions[i];
        outcomes[i].status = RolloutOutcome::Status::BackendFailure;
        outcomes[i].failure_reason = e.what();
      }
    }
  };

  if (parallelism == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < parallelism; ++t) {
      threads.emplace_back(worker, static_cast<size_t>(t),
                           static_cast<size_t>(parallelism));
    }
    for (auto& t : threads) t.join();
  }
  return outcomes;
}

ChatHistory reconstruct_history(const std::string& question,
                                const skillbank::SkillBankVersion& bank,
                                const std::vector<TraceStep>& steps, size_t step,
                                PromptPoint point, const RolloutConfig& config) {
  const std::string index_text = skillbank::render_index(bank);
  ChatHistory history;
  if (!config.system_prompt.empty()) {
    history.push_back({Role::System, config.system_prompt});
  }
  history.push_back({Role::User, question});
  history.push_back({Role::User, index_text});

  for (size_t i = 0; i < step && i < steps.size(); ++i) {
    const auto& s = steps[i];
    history.push_back({Role::Assistant, s.selection_text});
    history.push_back({Role::User, skillbank::render_cards(s.cards_shown)});
    history.push_back({Role::Assistant, s.action_text});
    if (s.retrieved) {
      history.push_back({Role::User, information_turn(*s.retrieved, index_text)});
    }
  }
  if (point == PromptPoint::BeforeAction && step < steps.size()) {
    const auto& s = steps[step];
    history.push_back({Role::Assistant, s.selection_text});
    history.push_back({Role::User, skillbank::render_cards(s.cards_shown)});
  }
  return history;
}

namespace {

nlohmann::json passage_to_json(const Passage& p) {
  return {{"doc_id", p.doc_id}, {"title", p.title}, {"text", p.text}, {"score", p.score}};
}

Passage passage_from_json(const nlohmann::json& j) {
  Passage p;
  p.doc_id = j.at("doc_id").get<std::string>();
  p.title = j.value("title", "");
  p.text = j.value("text", "");
  p.score = j.value("score", 0.0);
  return p;
}

RolloutOutcome::Status status_from_name(const std::string& name) {
  if (name == "answered") return RolloutOutcome::Status::Answered;
  if (name == "budget-exhausted") return RolloutOutcome::Status::BudgetExhausted;
  if (name == "invalid-action") return RolloutOutcome::Status::InvalidAction;
  return RolloutOutcome::Status::BackendFailure;
}

}  // namespace

nlohmann::json outcome_to_json(const RolloutOutcome& outcome) {
  nlohmann::json doc;
  doc["question"] = outcome.question;
  doc["status"] = status_name(outcome.status);
  if (outcome.status == RolloutOutcome::Status::Answered) {
    doc["final_answer"] = outcome.final_answer;
  }
  if (!outcome.failure_reason.empty()) doc["failure_reason"] = outcome.failure_reason;
  doc["steps"] = nlohmann::json::array();
  for (const auto& step : outcome.trace) {
    nlohmann::json js;
    js["selection_ids"] = step.selection.ids;
    js["selection_text"] = step.selection_text;
    js["cards_shown"] = nlohmann::json::array();
    for (const auto& card : step.cards_shown) js["cards_shown"].push_back(card.id);
    js["unrecognized_ids"] = step.unrecognized_ids;
    js["skills"] = step.action.skills;
    js["action_kind"] =
        step.action.kind == tags::ActionKind::Search ? "search" : "answer";
    js["payload"] = step.action.payload;
    js["action_text"] = step.action_text;
    if (step.retrieved) {
      js["retrieved"] = nlohmann::json::array();
      for (const auto& p : *step.retrieved) js["retrieved"].push_back(passage_to_json(p));
    }
    if (step.checkpoint) js["checkpoint"] = *step.checkpoint;
    doc["steps"].push_back(std::move(js));
  }
  return doc;
}

RolloutOutcome outcome_from_json(const nlohmann::json& doc) {
  RolloutOutcome outcome;
  outcome.question = doc.value("question", "");
  outcome.status = status_from_name(doc.value("status", "backend-failure"));
  outcome.final_answer = doc.value("final_answer", "");
  outcome.failure_reason = doc.value("failure_reason", "");
  for (const auto& js : doc.value("steps", nlohmann::json::array())) {
    TraceStep step;
    step.selection.ids = js.value("selection_ids", std::vector<std::string>{});
    step.selection_text = js.value("selection_text", "");
    // cards_shown is persisted as ids only; rehydrate id-bearing stubs so a
    // load/save cycle is stable. Consumers needing bodies re-resolve via bank.
    for (const auto& id : js.value("cards_shown", std::vector<std::string>{})) {
      skillbank::SkillCard card;
      card.id = id;
      step.cards_shown.push_back(std::move(card));
    }
    step.unrecognized_ids = js.value("unrecognized_ids", std::vector<std::string>{});
    step.action.skills = js.value("skills", std::vector<std::string>{});
    step.action.kind = js.value("action_kind", "search") == std::string("answer")
                           ? tags::ActionKind::Answer
                           : tags::ActionKind::Search;
    step.action.payload = js.value("payload", "");
    step.action_text = js.value("action_text", "");
    if (js.contains("retrieved")) {
      std::vector<Passage> passages;
      for (const auto& jp : js["retrieved"]) passages.push_back(passage_from_json(jp));
      step.retrieved = std::move(passages);
    }
    if (js.contains("checkpoint")) step.checkpoint = js["checkpoint"].get<std::string>();
    outcome.trace.push_back(std::move(step));
  }
  return outcome;
}

void write_trace_file(const std::vector<RolloutOutcome>& outcomes,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path.string());
  for (const auto& o : outcomes) out << outcome_to_json(o).dump() << "\n";
}

std::vector<RolloutOutcome> read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
  std::vector<RolloutOutcome> outcomes;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    outcomes.push_back(outcome_from_json(nlohmann::json::parse(line)));
  }
  return outcomes;
}

ReplayReport replay_trace(const RolloutOutcome& fixture, const env::Retriever& retriever,
                          int top_k) {
  ReplayReport report;
  report.final_answer = fixture.final_answer;
  for (const auto& step : fixture.trace) {
    if (step.action.kind != tags::ActionKind::Search) continue;
    ReplayStepReport sr;
    sr.query = step.action.payload;
    if (step.retrieved) {
      for (const auto& p : *step.retrieved) sr.expected_doc_ids.push_back(p.doc_id);
    }
    try {
      for (const auto& p : retriever.retrieve(sr.query, top_k)) {
        sr.actual_doc_ids.push_back(p.doc_id);
      }
    } catch (const std::exception&) {
      // no results / retriever error counts as a mismatch below
    }
    sr.match = sr.actual_doc_ids == sr.expected_doc_ids;
    report.all_match = report.all_match && sr.match;
    report.steps.push_back(std::move(sr));
  }
  return report;
}

}  // namespace skillagent::rollout
