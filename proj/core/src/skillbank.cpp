#include "skillagent/skillbank.hpp"

#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "skillagent/text.hpp"

namespace skillagent::skillbank {

namespace {

std::string one_line(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c == '\n' || c == '\r') c = ' ';
  return text::trim(out);
}

bool is_ablation_label(const std::string& label) {
  return text::to_lower(label).find("empty") != std::string::npos;
}

}  // namespace

const char* category_name(Category c) {
  switch (c) {
    case Category::DirectLookup: return "direct-lookup";
    case Category::BridgeChain: return "bridge-chain";
    case Category::ComparisonJoin: return "comparison-join";
    case Category::GroundingVerification: return "grounding-verification";
  }
  return "unknown";
}

Category category_from_name(const std::string& name) {
  if (name == "direct-lookup") return Category::DirectLookup;
  if (name == "bridge-chain") return Category::BridgeChain;
  if (name == "comparison-join") return Category::ComparisonJoin;
  if (name == "grounding-verification") return Category::GroundingVerification;
  throw BankError("unknown skill category: " + name);
}

const SkillCard* SkillBankVersion::find(const std::string& id) const {
  for (const auto& card : cards)
    if (card.id == id) return &card;
  return nullptr;
}

void validate_bank(const SkillBankVersion& bank) {
  if (bank.label.empty()) throw BankError("bank label is empty");
  if (bank.cards.empty() && !is_ablation_label(bank.label)) {
    throw BankError("bank '" + bank.label + "' has no cards");
  }
  std::unordered_set<std::string> seen;
  for (const auto& card : bank.cards) {
    if (!text::is_kebab_identifier(card.id)) {
      throw BankError("card id is not a kebab identifier: '" + card.id + "'");
    }
    if (!seen.insert(card.id).second) {
      throw BankError("duplicate card id: " + card.id);
    }
    if (card.summary.empty()) {
      throw BankError("card '" + card.id + "' has an empty summary");
    }
  }
}

namespace {

SkillCard card_from_json(const nlohmann::json& j) {
  SkillCard card;
  card.id = j.at("id").get<std::string>();
  card.display_name = j.value("display_name", "");
  card.category = category_from_name(j.at("category").get<std::string>());
  card.summary = j.at("summary").get<std::string>();
  card.usage_notes = j.value("usage_notes", "");
  card.support_only = j.value("support_only", false);
  return card;
}

nlohmann::json card_to_json(const SkillCard& card) {
  return {{"id", card.id},
          {"display_name", card.display_name},
          {"category", category_name(card.category)},
          {"summary", card.summary},
          {"usage_notes", card.usage_notes},
          {"support_only", card.support_only}};
}

}  // namespace

SkillBankVersion bank_from_json(const nlohmann::json& doc) {
  SkillBankVersion bank;
  bank.label = doc.at("label").get<std::string>();
  if (doc.contains("parent_label") && !doc["parent_label"].is_null()) {
    bank.parent_label = doc["parent_label"].get<std::string>();
  }
  bank.provenance = doc.value("provenance", "");
  for (const auto& j : doc.at("cards")) bank.cards.push_back(card_from_json(j));
  validate_bank(bank);
  return bank;
}

nlohmann::json bank_to_json(const SkillBankVersion& bank) {
  nlohmann::json doc;
  doc["label"] = bank.label;
  if (bank.parent_label) doc["parent_label"] = *bank.parent_label;
  doc["provenance"] = bank.provenance;
  doc["cards"] = nlohmann::json::array();
  for (const auto& card : bank.cards) doc["cards"].push_back(card_to_json(card));
  return doc;
}

SkillBankVersion load_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BankError("cannot open bank file: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw BankError("bank parse failure in " + path.string() + ": " + e.what());
  }
  try {
    return bank_from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw BankError("bank schema failure in " + path.string() + ": " + e.what());
  }
}

void save_bank(const SkillBankVersion& bank, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw BankError("cannot write bank file: " + path.string());
  out << bank_to_json(bank).dump(2) << "\n";
}

BankUpdate update_from_json(const nlohmann::json& doc) {
  BankUpdate update;
  for (const auto& j : doc.value("additions", nlohmann::json::array()))
    update.additions.push_back(card_from_json(j));
  for (const auto& j : doc.value("refinements", nlohmann::json::array()))
    update.refinements.push_back(card_from_json(j));
  return update;
}

BankUpdate load_update(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BankError("cannot open update file: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw BankError("update parse failure in " + path.string() + ": " + e.what());
  }
  return update_from_json(doc);
}

SkillBankVersion apply_update(const SkillBankVersion& parent, const BankUpdate& update,
                              const std::string& new_label) {
  std::unordered_map<std::string, const SkillCard*> refinements;
  for (const auto& card : update.refinements) {
    if (!parent.find(card.id)) {
      throw BankError("refinement of missing card id: " + card.id);
    }
    refinements[card.id] = &card;
  }
  for (const auto& card : update.additions) {
    if (parent.find(card.id)) {
      throw BankError("addition id collision: " + card.id);
    }
  }

  SkillBankVersion child;
  child.label = new_label;
  child.parent_label = parent.label;
  std::vector<std::string> refined_ids;
  for (const auto& card : parent.cards) {
    auto it = refinements.find(card.id);
    if (it != refinements.end()) {
      child.cards.push_back(*it->second);
      refined_ids.push_back(card.id);
    } else {
      child.cards.push_back(card);
    }
  }
  for (const auto& card : update.additions) child.cards.push_back(card);

  child.provenance = "derived from " + parent.label;
  if (!refined_ids.empty()) {
    child.provenance += "; refined: " + text::join(refined_ids, ", ");
  }
  validate_bank(child);
  return child;
}

std::string render_index(const SkillBankVersion& bank) {
  if (bank.cards.empty()) {
    return "No skills are provided for this task. Proceed without a skill inventory.";
  }
  std::string out = "Available skills:\n";
  for (const auto& card : bank.cards) {
    out += "- " + card.id + ": " + one_line(card.summary) + "\n";
  }
  return out;
}

CardLookup get_cards(const SkillBankVersion& bank, const std::vector<std::string>& ids) {
  CardLookup lookup;
  for (const auto& id : ids) {
    if (const SkillCard* card = bank.find(id)) {
      lookup.cards.push_back(*card);
    } else {
      lookup.unrecognized.push_back(id);
    }
  }
  return lookup;
}

std::string render_cards(const std::vector<SkillCard>& cards) {
  if (cards.empty()) return "No matching skill cards found.";
  std::string out;
  for (size_t i = 0; i < cards.size(); ++i) {
    const auto& card = cards[i];
    if (i) out += "\n";
    out += "Skill card: " + card.id + " (" + category_name(card.category) + ")\n";
    if (!card.display_name.empty()) out += "Name: " + card.display_name + "\n";
    out += "Summary: " + one_line(card.summary) + "\n";
    if (!card.usage_notes.empty()) out += "Usage: " + one_line(card.usage_notes) + "\n";
    if (card.support_only) out += "Support-only skill.\n";
  }
  return out;
}

std::optional<AblationMode> ablation_mode_from_name(const std::string& name) {
  if (name == "empty") return AblationMode::Empty;
  if (name == "strip-content") return AblationMode::StripContent;
  if (name == "remove-category") return AblationMode::RemoveCategory;
  return std::nullopt;
}

SkillBankVersion ablate(const SkillBankVersion& bank, AblationMode mode,
                        std::optional<Category> category) {
  SkillBankVersion out;
  out.parent_label = bank.label;
  out.provenance = "ablation of " + bank.label;
  switch (mode) {
    case AblationMode::Empty:
      out.label = bank.label + "-empty";
      break;
    case AblationMode::StripContent:
      out.label = bank.label + "-stripped";
      out.cards = bank.cards;
      for (auto& card : out.cards) {
        // Keep the id routable; blank everything a reader could use.
        card.summary.clear();
        card.usage_notes.clear();
        card.display_name.clear();
      }
      break;
    case AblationMode::RemoveCategory: {
      if (!category) throw BankError("remove-category ablation needs a category");
      out.label = bank.label + "-no-" + category_name(*category);
      for (const auto& card : bank.cards)
        if (card.category != *category) out.cards.push_back(card);
      break;
    }
  }
  return out;
}

}  // namespace skillagent::skillbank
