#include "skillagent/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "skillagent/eval.hpp"
#include "skillagent/text.hpp"

namespace skillagent::sampler {

namespace {

bool contains_any(const std::unordered_set<std::string>& tokens,
                  std::initializer_list<const char*> words) {
  for (const char* w : words) {
    if (tokens.count(w)) return true;
  }
  return false;
}

bool has_digit(const std::string& s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c); });
}

const std::unordered_set<std::string>& month_names() {
  static const std::unordered_set<std::string> kMonths = {
      "january", "february", "march",     "april",   "may",      "june",
      "july",    "august",   "september", "october", "november", "december"};
  return kMonths;
}

std::string classify_answer_form(const std::vector<std::string>& answers) {
  if (answers.empty()) return "other";
  const std::string norm = eval::normalize_answer(answers.front());
  if (norm == "yes" || norm == "no") return "yes-no";
  auto tokens = text::tokenize(norm);
  if (tokens.empty()) return "other";

  bool all_numeric = true;
  bool any_month = false;
  bool any_year = false;
  for (const auto& t : tokens) {
    if (!std::all_of(t.begin(), t.end(),
                     [](unsigned char c) { return std::isdigit(c); })) {
      all_numeric = false;
    }
    if (month_names().count(t)) any_month = true;
    if (t.size() == 4 &&
        std::all_of(t.begin(), t.end(),
                    [](unsigned char c) { return std::isdigit(c); })) {
      any_year = true;
    }
  }
  if (any_month || (any_year && tokens.size() <= 3)) return "date";
  if (all_numeric) return "number";
  if (tokens.size() >= 6) return "span";

  // Proper-noun answers (title-cased words) are entities.
  size_t capitalized = 0, words = 0;
  std::istringstream raw(answers.front());
  std::string w;
  while (raw >> w) {
    ++words;
    if (std::isupper(static_cast<unsigned char>(w.front()))) ++capitalized;
  }
  if (words > 0 && capitalized * 2 >= words) return "entity";
  return "other";
}

std::map<std::string, bool> extract_cues(const std::string& question) {
  const std::string lower = text::to_lower(question);
  auto tokens_vec = text::tokenize(question);
  std::unordered_set<std::string> tokens(tokens_vec.begin(), tokens_vec.end());

  std::map<std::string, bool> cues;
  cues["temporal"] =
      contains_any(tokens, {"when", "year", "date", "day", "month", "decade",
                            "century", "during", "before", "after", "until",
                            "since", "era", "first", "introduced"}) ||
      std::any_of(tokens_vec.begin(), tokens_vec.end(), [](const std::string& t) {
        return t.size() == 4 && std::all_of(t.begin(), t.end(), [](unsigned char c) {
                 return std::isdigit(c);
               });
      });
  cues["numerical"] =
      contains_any(tokens, {"many", "number", "count", "total", "percent",
                            "population", "height", "age", "amount"}) ||
      has_digit(lower);
  cues["comparison"] =
      contains_any(tokens, {"more",    "most",    "less",    "least",   "larger",
                            "largest", "smaller", "smallest", "older",  "oldest",
                            "younger", "youngest", "earlier", "earliest", "later",
                            "latest",  "higher",  "highest", "taller",  "tallest",
                            "longer",  "longest", "bigger",  "biggest", "better",
                            "best",    "worse",   "worst",   "difference",
                            "compare", "compared", "both",   "same"}) ||
      (lower.find(" or ") != std::string::npos &&
       contains_any(tokens, {"first", "last", "which", "who"}));
  cues["alias"] = lower.find("known as") != std::string::npos ||
                  lower.find("also called") != std::string::npos ||
                  lower.find("referred to") != std::string::npos ||
                  lower.find("real name") != std::string::npos ||
                  lower.find("stage name") != std::string::npos ||
                  contains_any(tokens, {"nickname", "alias", "aka"});
  const std::string first_token = tokens_vec.empty() ? "" : tokens_vec.front();
  static const std::unordered_set<std::string> kAux = {
      "is", "are", "was", "were", "did", "does", "do",
      "has", "have", "can", "could"};
  cues["verification"] =
      kAux.count(first_token) > 0 || lower.find("true") != std::string::npos;
  size_t of_count = 0;
  for (size_t pos = lower.find(" of "); pos != std::string::npos;
       pos = lower.find(" of ", pos + 1)) {
    ++of_count;
  }
  cues["relation-chain"] =
      of_count >= 2 ||
      contains_any(tokens, {"whose", "father", "mother", "husband", "wife",
                            "son", "daughter", "grandfather", "grandmother",
                            "spouse", "sibling"});
  return cues;
}

int count_entity_runs(const std::string& question) {
  std::istringstream in(question);
  std::string word;
  int runs = 0;
  bool in_run = false;
  bool first = true;
  while (in >> word) {
    const bool cap = std::isupper(static_cast<unsigned char>(word.front()));
    // The sentence-initial capital is orthography, not an entity marker.
    if (cap && !first) {
      if (!in_run) ++runs;
      in_run = true;
    } else {
      in_run = false;
    }
    first = false;
  }
  return runs;
}

}  // namespace

ExampleProfile profile_example(const RawExample& example,
                               const ProfileConfig& config) {
  if (text::trim(example.question).empty()) {
    throw std::invalid_argument("profile_example: empty question");
  }
  ExampleProfile profile;
  profile.example_id = example.example_id;
  profile.dataset = example.dataset;
  profile.question = example.question;
  profile.native_type = example.native_type;
  profile.hop_count = example.hop_count;
  profile.answer_form = classify_answer_form(example.answers);

  auto tokens = text::tokenize(example.question);
  static const std::vector<std::string> kWh = {"who",   "what", "when", "where",
                                               "which", "why",  "how"};
  profile.wh_type = "none";
  for (const auto& t : tokens) {
    if (std::find(kWh.begin(), kWh.end(), t) != kWh.end()) {
      profile.wh_type = t;
      break;
    }
  }
  profile.length_bucket = tokens.size() <= config.short_max_tokens ? "short"
                          : tokens.size() >= config.long_min_tokens
                              ? "long"
                              : "medium";
  profile.entity_count = count_entity_runs(example.question);
  profile.cues = extract_cues(example.question);
  return profile;
}

std::string signature_key(const ExampleProfile& profile) {
  std::string cue_bits;
  for (const char* cue : kCueNames) {
    auto it = profile.cues.find(cue);
    cue_bits += (it != profile.cues.end() && it->second) ? '1' : '0';
  }
  return profile.dataset + "/" + profile.native_type.value_or("-") + "/" +
         (profile.hop_count ? std::to_string(*profile.hop_count) : "-") + "/" +
         profile.answer_form + "/" + profile.wh_type + "/" + cue_bits;
}

std::vector<Signature> group_signatures(const std::vector<ExampleProfile>& profiles) {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& p : profiles) groups[signature_key(p)].push_back(p.example_id);
  std::vector<Signature> signatures;
  signatures.reserve(groups.size());
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end());
    signatures.push_back({key, std::move(members)});
  }
  return signatures;
}

namespace {

struct SigState {
  const Signature* sig = nullptr;
  std::vector<std::string> order;  // seeded per-signature member order
  size_t taken = 0;
  std::vector<std::string> cells;  // coverage cells this signature touches
};

std::vector<std::string> coverage_cells(const ExampleProfile& profile) {
  std::vector<std::string> cells;
  cells.push_back("af:" + profile.answer_form);
  cells.push_back("wh:" + profile.wh_type);
  for (const auto& [cue, on] : profile.cues) {
    if (on) cells.push_back("cue:" + cue);
  }
  return cells;
}

uint64_t mix_seed(uint64_t seed, const std::string& key) {
  uint64_t h = seed ^ 14695981039346656037ull;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::vector<std::string> sample_capped(const std::vector<ExampleProfile>& profiles,
                                       const SampleConfig& config) {
  if (config.target > profiles.size()) {
    throw std::invalid_argument("sample_capped: infeasible target " +
                                std::to_string(config.target) + " for pool of " +
                                std::to_string(profiles.size()));
  }

  std::unordered_map<std::string, const ExampleProfile*> by_key;
  for (const auto& p : profiles) by_key.emplace(signature_key(p), &p);
  const auto signatures = group_signatures(profiles);

  std::vector<std::string> selected;
  selected.reserve(config.target);
  std::vector<SigState> states;

  for (const auto& sig : signatures) {
    if (sig.members.size() <= config.rare_threshold) {
      for (const auto& id : sig.members) selected.push_back(id);
      continue;
    }
    SigState state;
    state.sig = &sig;
    state.order = sig.members;  // already sorted canonically
    std::mt19937_64 rng(mix_seed(config.seed, sig.key));
    std::shuffle(state.order.begin(), state.order.end(), rng);
    state.cells = coverage_cells(*by_key.at(sig.key));
    states.push_back(std::move(state));
  }

  // Rare signatures can overshoot a tiny target; trim deterministically so the
  // exact-size contract still holds.
  if (selected.size() > config.target) {
    selected.resize(config.target);
    return selected;
  }

  // Greedy coverage: repeatedly take one member from the capped signature
  // adding the most uncovered (answer form / wh type / cue) cells; when every
  // cell is covered, reset coverage and cycle again for balance.
  std::set<std::string> covered;
  while (selected.size() < config.target) {
    SigState* best = nullptr;
    size_t best_gain = 0;
    for (auto& state : states) {
      if (state.taken >= std::min<size_t>(config.cap, state.order.size())) continue;
      size_t gain = 0;
      for (const auto& cell : state.cells) gain += covered.count(cell) ? 0 : 1;
      if (!best || gain > best_gain ||
          (gain == best_gain && state.sig->key < best->sig->key)) {
        best = &state;
        best_gain = gain;
      }
    }
    if (!best) break;  // every capped signature is exhausted
    if (best_gain == 0 && !covered.empty()) {
      covered.clear();
      continue;
    }
    selected.push_back(best->order[best->taken++]);
    for (const auto& cell : best->cells) covered.insert(cell);
  }

  // Caps alone could not reach the target (e.g. target == pool size): refill
  // beyond the cap in ranked signature order so the exact size is met.
  size_t cursor = 0;
  while (selected.size() < config.target && !states.empty()) {
    bool advanced = false;
    for (size_t i = 0; i < states.size() && selected.size() < config.target; ++i) {
      auto& state = states[(cursor + i) % states.size()];
      if (state.taken < state.order.size()) {
        selected.push_back(state.order[state.taken++]);
        advanced = true;
      }
    }
    cursor = (cursor + 1) % std::max<size_t>(states.size(), 1);
    if (!advanced) break;
  }
  return selected;
}

std::vector<RawExample> filter_eval_overlap(
    const std::vector<RawExample>& pool, const std::vector<std::string>& eval_ids,
    const std::vector<std::string>& eval_questions) {
  std::unordered_set<std::string> ids(eval_ids.begin(), eval_ids.end());
  std::unordered_set<std::string> questions;
  for (const auto& q : eval_questions) questions.insert(eval::normalize_answer(q));
  std::vector<RawExample> kept;
  for (const auto& ex : pool) {
    if (!ex.example_id.empty() && ids.count(ex.example_id)) continue;
    if (!questions.empty() && questions.count(eval::normalize_answer(ex.question))) {
      continue;
    }
    kept.push_back(ex);
  }
  return kept;
}

skillbank::Category category_for_cue(const std::string& cue) {
  if (cue == "comparison") return skillbank::Category::ComparisonJoin;
  if (cue == "relation-chain") return skillbank::Category::BridgeChain;
  if (cue == "verification") return skillbank::Category::GroundingVerification;
  // temporal, numerical, alias, and anything unrecognized
  return skillbank::Category::DirectLookup;
}

std::vector<trajectory::ManifestEntry> build_manifest(
    const std::vector<RawExample>& selected,
    const std::vector<ExampleProfile>& profiles,
    const std::vector<trajectory::Trajectory>& failures,
    const skillbank::SkillBankVersion& bank, const ManifestConfig& config) {
  if (config.replay_ratio < 0.0 || config.replay_ratio >= 1.0) {
    throw std::invalid_argument("build_manifest: replay ratio must be in [0, 1)");
  }
  std::unordered_map<std::string, const ExampleProfile*> by_id;
  for (const auto& p : profiles) by_id.emplace(p.example_id, &p);

  std::vector<trajectory::ManifestEntry> pool_entries;
  for (const auto& ex : selected) {
    trajectory::ManifestEntry entry;
    entry.example_id = ex.example_id;
    entry.dataset = ex.dataset;
    entry.question = ex.question;
    entry.gold_answers = ex.answers;
    entry.hop_count = ex.hop_count;
    entry.source = "pool";

    std::set<skillbank::Category> categories;
    auto it = by_id.find(ex.example_id);
    if (it != by_id.end()) {
      const auto& profile = *it->second;
      entry.question_type = profile.native_type;
      entry.cue_flags = profile.cues;
      for (const auto& [cue, on] : profile.cues) {
        if (on) categories.insert(category_for_cue(cue));
      }
    }
    if (categories.empty()) categories.insert(skillbank::Category::DirectLookup);
    for (const auto& card : bank.cards) {
      if (!categories.count(card.category) &&
          card.category != skillbank::Category::GroundingVerification) {
        continue;
      }
      if (card.support_only) {
        entry.suggested_support_skills.push_back(card.id);
      } else if (categories.count(card.category)) {
        entry.candidate_primary_skills.push_back(card.id);
      }
    }
    pool_entries.push_back(std::move(entry));
  }

  const size_t replay_count = std::min<size_t>(
      failures.size(),
      static_cast<size_t>(std::llround(
          static_cast<double>(pool_entries.size()) * config.replay_ratio /
          (1.0 - config.replay_ratio))));

  std::vector<trajectory::ManifestEntry> replays;
  for (size_t i = 0; i < replay_count; ++i) {
    const auto& fail = failures[i];
    trajectory::ManifestEntry entry;
    entry.example_id = fail.example_id;
    entry.dataset = fail.dataset;
    entry.question = fail.question;
    entry.gold_answers = fail.gold_answers;
    entry.question_type = fail.question_type;
    entry.hop_count = fail.hop_count;
    entry.cue_flags = fail.cue_flags;
    entry.source = "failure-replay";
    for (const auto& card : bank.cards) {
      if (card.support_only) {
        entry.suggested_support_skills.push_back(card.id);
      }
    }
    replays.push_back(std::move(entry));
  }

  if (replays.empty()) return pool_entries;

  // Spread the replay entries evenly through the pool order.
  std::vector<trajectory::ManifestEntry> manifest;
  manifest.reserve(pool_entries.size() + replays.size());
  const size_t stride =
      std::max<size_t>(1, pool_entries.size() / replays.size());
  size_t next_replay = 0;
  for (size_t i = 0; i < pool_entries.size(); ++i) {
    manifest.push_back(pool_entries[i]);
    if ((i + 1) % stride == 0 && next_replay < replays.size()) {
      manifest.push_back(replays[next_replay++]);
    }
  }
  while (next_replay < replays.size()) manifest.push_back(replays[next_replay++]);
  return manifest;
}

std::vector<RawExample> load_pool(const std::filesystem::path& path,
                                  const std::string& default_dataset) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pool file: " + path.string());
  std::vector<RawExample> pool;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    auto doc = nlohmann::json::parse(line);
    RawExample ex;
    ex.example_id = doc.contains("example_id")
                        ? doc["example_id"].get<std::string>()
                        : doc.value("id", "");
    ex.dataset = doc.value("dataset", default_dataset);
    ex.question = doc.at("question").get<std::string>();
    if (doc.contains("answers")) {
      ex.answers = doc["answers"].get<std::vector<std::string>>();
    } else if (doc.contains("gold_answers")) {
      ex.answers = doc["gold_answers"].get<std::vector<std::string>>();
    } else if (doc.contains("answer")) {
      ex.answers = {doc["answer"].get<std::string>()};
    }
    if (doc.contains("type")) ex.native_type = doc["type"].get<std::string>();
    if (doc.contains("hop_count")) ex.hop_count = doc["hop_count"].get<int>();
    pool.push_back(std::move(ex));
  }
  return pool;
}

}  // namespace skillagent::sampler
