#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skillagent/passage.hpp"

namespace skillagent::tags {

// Wire-format tag names. Matching is exact and case-sensitive.
inline constexpr std::string_view kSelectSkillTag = "select_skill";
inline constexpr std::string_view kSkillTag = "skill";
inline constexpr std::string_view kSearchTag = "search";
inline constexpr std::string_view kAnswerTag = "answer";
inline constexpr std::string_view kInformationTag = "information";

enum class ParseErrorCode {
  MissingTag,
  EmptySelection,
  MissingSkillTag,
  MissingAction,
  MultipleActions,
  MalformedTag,
};

const char* to_string(ParseErrorCode code);

struct ParseError {
  ParseErrorCode code;
  std::string detail;
};

struct SkillSelection {
  std::vector<std::string> ids;  // ordered, >=1 after a successful parse

  bool operator==(const SkillSelection&) const = default;
};

enum class ActionKind { Search, Answer };

struct ParsedAction {
  std::vector<std::string> skills;  // first is primary, rest are support
  ActionKind kind = ActionKind::Search;
  std::string payload;

  bool operator==(const ParsedAction&) const = default;
};

template <typename T>
struct ParseResult {
  std::optional<T> value;
  std::optional<ParseError> error;

  bool ok() const { return value.has_value(); }
  const T& operator*() const { return *value; }
};

struct ParseOptions {
  /// Strict mode rejects non-whitespace content outside the recognized tags.
  bool strict = false;
  /// Separator between ids inside a select_skill tag.
  char selection_separator = ',';
};

ParseResult<SkillSelection> parse_selection_turn(std::string_view turn,
                                                 ParseOptions opts = {});

ParseResult<ParsedAction> parse_action_turn(std::string_view turn,
                                            ParseOptions opts = {});

enum class TurnKind { Selection, Action, Neither };

TurnKind classify_turn(std::string_view turn, ParseOptions opts = {});

std::string render_selection(const SkillSelection& sel);
std::string render_action(const ParsedAction& action);

/// "Doc i: <title>. <text>" lines wrapped in one information tag pair.
/// Byte-exact output is part of the wire contract.
std::string render_information(const std::vector<Passage>& passages);

}  // namespace skillagent::tags
