#include "skillagent/tags.hpp"

#include <stdexcept>

#include "skillagent/text.hpp"

namespace skillagent::tags {

namespace {

struct TagSpan {
  size_t open_begin = 0;
  size_t content_begin = 0;
  size_t content_end = 0;
  size_t close_end = 0;
};

std::string open_tok(std::string_view name) { return "<" + std::string(name) + ">"; }
std::string close_tok(std::string_view name) { return "</" + std::string(name) + ">"; }

// First well-formed <name>...</name> pair.
std::optional<TagSpan> find_pair(std::string_view s, std::string_view name) {
  const std::string open = open_tok(name);
  const std::string close = close_tok(name);
  size_t ob = s.find(open);
  if (ob == std::string_view::npos) return std::nullopt;
  size_t cb = s.find(close, ob + open.size());
  if (cb == std::string_view::npos) return std::nullopt;
  return TagSpan{ob, ob + open.size(), cb, cb + close.size()};
}

// A closing token before any opener, or an opener never closed.
std::optional<ParseError> check_balance(std::string_view s, std::string_view name) {
  const std::string open = open_tok(name);
  const std::string close = close_tok(name);
  size_t ob = s.find(open);
  size_t cb = s.find(close);
  if (cb != std::string_view::npos && (ob == std::string_view::npos || cb < ob)) {
    return ParseError{ParseErrorCode::MalformedTag,
                      "closing " + close + " without an opening tag"};
  }
  if (ob != std::string_view::npos &&
      s.find(close, ob + open.size()) == std::string_view::npos) {
    return ParseError{ParseErrorCode::MalformedTag, "unbalanced " + open};
  }
  return std::nullopt;
}

bool only_whitespace_outside(std::string_view s, const std::vector<TagSpan>& spans) {
  std::vector<bool> covered(s.size(), false);
  for (const auto& sp : spans)
    for (size_t i = sp.open_begin; i < sp.close_end; ++i) covered[i] = true;
  for (size_t i = 0; i < s.size(); ++i) {
    if (!covered[i] && !std::isspace(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

}  // namespace

const char* to_string(ParseErrorCode code) {
  switch (code) {
    case ParseErrorCode::MissingTag: return "MissingTag";
    case ParseErrorCode::EmptySelection: return "EmptySelection";
    case ParseErrorCode::MissingSkillTag: return "MissingSkillTag";
    case ParseErrorCode::MissingAction: return "MissingAction";
    case ParseErrorCode::MultipleActions: return "MultipleActions";
    case ParseErrorCode::MalformedTag: return "MalformedTag";
  }
  return "Unknown";
}

ParseResult<SkillSelection> parse_selection_turn(std::string_view turn,
                                                 ParseOptions opts) {
  auto span = find_pair(turn, kSelectSkillTag);
  if (!span) {
    return {std::nullopt,
            ParseError{ParseErrorCode::MissingTag, "no select_skill tag pair"}};
  }
  if (opts.strict && !only_whitespace_outside(turn, {*span})) {
    return {std::nullopt, ParseError{ParseErrorCode::MalformedTag,
                                     "content outside select_skill tag in strict mode"}};
  }
  auto content = turn.substr(span->content_begin, span->content_end - span->content_begin);
  auto ids = text::split_trimmed(content, opts.selection_separator);
  if (ids.empty()) {
    return {std::nullopt,
            ParseError{ParseErrorCode::EmptySelection, "select_skill tag has no ids"}};
  }
  return {SkillSelection{std::move(ids)}, std::nullopt};
}

ParseResult<ParsedAction> parse_action_turn(std::string_view turn, ParseOptions opts) {
  for (auto name : {kSkillTag, kSearchTag, kAnswerTag}) {
    if (auto err = check_balance(turn, name)) return {std::nullopt, err};
  }

  auto skill_span = find_pair(turn, kSkillTag);
  if (!skill_span) {
    return {std::nullopt,
            ParseError{ParseErrorCode::MissingSkillTag, "no skill tag pair"}};
  }
  auto skill_content =
      turn.substr(skill_span->content_begin,
                  skill_span->content_end - skill_span->content_begin);
  auto skills = text::split_trimmed(skill_content, '|');
  if (skills.empty()) {
    return {std::nullopt,
            ParseError{ParseErrorCode::MissingSkillTag, "skill tag lists no ids"}};
  }

  auto search_span = find_pair(turn, kSearchTag);
  auto answer_span = find_pair(turn, kAnswerTag);
  if (search_span && answer_span) {
    return {std::nullopt, ParseError{ParseErrorCode::MultipleActions,
                                     "both search and answer tags present"}};
  }
  if (!search_span && !answer_span) {
    return {std::nullopt,
            ParseError{ParseErrorCode::MissingAction, "neither search nor answer tag"}};
  }

  const TagSpan& act = search_span ? *search_span : *answer_span;
  if (opts.strict && !only_whitespace_outside(turn, {*skill_span, act})) {
    return {std::nullopt, ParseError{ParseErrorCode::MalformedTag,
                                     "content outside tags in strict mode"}};
  }
  auto payload =
      text::trim(turn.substr(act.content_begin, act.content_end - act.content_begin));
  if (payload.empty()) {
    return {std::nullopt,
            ParseError{ParseErrorCode::MalformedTag, "empty action payload"}};
  }

  ParsedAction action;
  action.skills = std::move(skills);
  action.kind = search_span ? ActionKind::Search : ActionKind::Answer;
  action.payload = std::move(payload);
  return {std::move(action), std::nullopt};
}

TurnKind classify_turn(std::string_view turn, ParseOptions opts) {
  if (parse_selection_turn(turn, opts).ok()) return TurnKind::Selection;
  if (parse_action_turn(turn, opts).ok()) return TurnKind::Action;
  return TurnKind::Neither;
}

std::string render_selection(const SkillSelection& sel) {
  return open_tok(kSelectSkillTag) + text::join(sel.ids, ", ") +
         close_tok(kSelectSkillTag);
}

std::string render_action(const ParsedAction& action) {
  auto name = action.kind == ActionKind::Search ? kSearchTag : kAnswerTag;
  return open_tok(kSkillTag) + text::join(action.skills, "|") + close_tok(kSkillTag) +
         "\n" + open_tok(name) + action.payload + close_tok(name);
}

std::string render_information(const std::vector<Passage>& passages) {
  if (passages.empty()) {
    throw std::invalid_argument("render_information: empty passage list");
  }
  std::string out = open_tok(kInformationTag);
  out += "\n";
  for (size_t i = 0; i < passages.size(); ++i) {
    out += "Doc " + std::to_string(i + 1) + ": " + passages[i].title + ". " +
           passages[i].text + "\n";
  }
  out += close_tok(kInformationTag);
  return out;
}

}  // namespace skillagent::tags
