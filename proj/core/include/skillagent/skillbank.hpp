#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace skillagent::skillbank {

enum class Category {
  DirectLookup,
  BridgeChain,
  ComparisonJoin,
  GroundingVerification,
};

const char* category_name(Category c);
Category category_from_name(const std::string& name);  // throws BankError

class BankError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SkillCard {
  std::string id;  // lowercase-kebab, unique within a bank version
  std::string display_name;
  Category category = Category::DirectLookup;
  std::string summary;  // routing description shown in the bank index
  std::string usage_notes;
  bool support_only = false;  // never the primary skill of a pre-answer turn

  bool operator==(const SkillCard&) const = default;
};

/// One immutable bank version. Card order is canonical and preserved.
struct SkillBankVersion {
  std::string label;
  std::optional<std::string> parent_label;
  std::string provenance;
  std::vector<SkillCard> cards;

  const SkillCard* find(const std::string& id) const;
};

struct BankUpdate {
  std::vector<SkillCard> additions;    // ids must be absent from the parent
  std::vector<SkillCard> refinements;  // ids must be present in the parent
};

/// Throws BankError on duplicate ids, bad identifiers, unknown categories,
/// or an empty card list on a non-ablation label.
void validate_bank(const SkillBankVersion& bank);

SkillBankVersion bank_from_json(const nlohmann::json& doc);
nlohmann::json bank_to_json(const SkillBankVersion& bank);

SkillBankVersion load_bank(const std::filesystem::path& path);
void save_bank(const SkillBankVersion& bank, const std::filesystem::path& path);

BankUpdate update_from_json(const nlohmann::json& doc);
BankUpdate load_update(const std::filesystem::path& path);

SkillBankVersion apply_update(const SkillBankVersion& parent, const BankUpdate& update,
                              const std::string& new_label);

/// Compact index text: one line per card id with its routing summary.
/// Contains no full card bodies. Deterministic.
std::string render_index(const SkillBankVersion& bank);

struct CardLookup {
  std::vector<SkillCard> cards;          // recognized ids, in request order
  std::vector<std::string> unrecognized;
};

CardLookup get_cards(const SkillBankVersion& bank, const std::vector<std::string>& ids);

/// Full card bodies for the card-context turn of the interaction protocol.
std::string render_cards(const std::vector<SkillCard>& cards);

enum class AblationMode { Empty, StripContent, RemoveCategory };

std::optional<AblationMode> ablation_mode_from_name(const std::string& name);

SkillBankVersion ablate(const SkillBankVersion& bank, AblationMode mode,
                        std::optional<Category> category = std::nullopt);

}  // namespace skillagent::skillbank
