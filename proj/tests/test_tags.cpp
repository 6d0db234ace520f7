#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "skillagent/tags.hpp"

using namespace skillagent;
using tags::ActionKind;
using tags::ParseErrorCode;

TEST_CASE("parse_selection_turn happy paths") {
  auto single =
      tags::parse_selection_turn("<select_skill>bridge-entity-search</select_skill>");
  REQUIRE(single.ok());
  CHECK((*single).ids == std::vector<std::string>{"bridge-entity-search"});

  auto multi = tags::parse_selection_turn(
      "<select_skill>relation-chain-decomposition, verbatim-evidence-span</select_skill>");
  REQUIRE(multi.ok());
  REQUIRE((*multi).ids.size() == 2);
  CHECK((*multi).ids[0] == "relation-chain-decomposition");
  CHECK((*multi).ids[1] == "verbatim-evidence-span");
}

TEST_CASE("parse_selection_turn errors") {
  auto missing = tags::parse_selection_turn("no tags here");
  REQUIRE_FALSE(missing.ok());
  CHECK(missing.error->code == ParseErrorCode::MissingTag);

  auto empty = tags::parse_selection_turn("<select_skill>  ,  </select_skill>");
  REQUIRE_FALSE(empty.ok());
  CHECK(empty.error->code == ParseErrorCode::EmptySelection);
}

TEST_CASE("parse_action_turn recognizes search and answer actions") {
  auto search = tags::parse_action_turn(
      "<skill>bridge-entity-search</skill>\n"
      "<search>\"The Things They Carried\" emus country</search>");
  REQUIRE(search.ok());
  CHECK((*search).skills == std::vector<std::string>{"bridge-entity-search"});
  CHECK((*search).kind == ActionKind::Search);
  CHECK((*search).payload == "\"The Things They Carried\" emus country");

  auto answer = tags::parse_action_turn(
      "<skill>verbatim-evidence-span|bridge-entity-search</skill>\n"
      "<answer>1964</answer>");
  REQUIRE(answer.ok());
  REQUIRE((*answer).skills.size() == 2);
  CHECK((*answer).skills[0] == "verbatim-evidence-span");
  CHECK((*answer).skills[1] == "bridge-entity-search");
  CHECK((*answer).kind == ActionKind::Answer);
  CHECK((*answer).payload == "1964");
}

TEST_CASE("parse_action_turn error taxonomy") {
  auto no_skill = tags::parse_action_turn("<search>q</search>");
  REQUIRE_FALSE(no_skill.ok());
  CHECK(no_skill.error->code == ParseErrorCode::MissingSkillTag);

  auto no_action = tags::parse_action_turn("<skill>a</skill> just chatter");
  REQUIRE_FALSE(no_action.ok());
  CHECK(no_action.error->code == ParseErrorCode::MissingAction);

  auto both = tags::parse_action_turn(
      "<skill>a</skill><search>q</search><answer>x</answer>");
  REQUIRE_FALSE(both.ok());
  CHECK(both.error->code == ParseErrorCode::MultipleActions);

  // Bare closing tag with no opener.
  auto bare = tags::parse_action_turn("</search>");
  REQUIRE_FALSE(bare.ok());
  CHECK(bare.error->code == ParseErrorCode::MalformedTag);

  auto unbalanced = tags::parse_action_turn("<skill>a</skill><search>q");
  REQUIRE_FALSE(unbalanced.ok());
  CHECK(unbalanced.error->code == ParseErrorCode::MalformedTag);
}

TEST_CASE("first well-formed pair wins; trailing chatter tolerated") {
  auto parsed = tags::parse_action_turn(
      "<skill>a</skill>\n<search>first</search>\nI think that covers it.");
  REQUIRE(parsed.ok());
  CHECK((*parsed).payload == "first");

  tags::ParseOptions strict;
  strict.strict = true;
  auto rejected = tags::parse_action_turn(
      "<skill>a</skill>\n<search>first</search>\nextra prose", strict);
  CHECK_FALSE(rejected.ok());
  auto clean = tags::parse_action_turn(
      "<skill>a</skill>\n<search>first</search>", strict);
  CHECK(clean.ok());
}

TEST_CASE("tag matching is exact and case-sensitive") {
  auto upper = tags::parse_selection_turn("<SELECT_SKILL>a</SELECT_SKILL>");
  CHECK_FALSE(upper.ok());
  auto padded = tags::parse_action_turn("<skill >a</skill><search>q</search>");
  CHECK_FALSE(padded.ok());
}

TEST_CASE("render_information wire format") {
  std::vector<Passage> passages = {
      {"d1", "Emu", "The emu is a large flightless bird.", 1.0},
      {"d2", "Emu War", "The Emu War took place in Australia.", 0.5},
      {"d3", "Conscription in Australia", "Introduced in 1964.", 0.2},
  };
  std::string block = tags::render_information(passages);
  CHECK(block.find("<information>") == 0);
  CHECK(block.rfind("</information>") != std::string::npos);
  CHECK(block.find("Doc 1: Emu. The emu is a large flightless bird.") !=
        std::string::npos);
  CHECK(block.find("Doc 2: Emu War.") != std::string::npos);
  CHECK(block.find("Doc 3: Conscription in Australia.") != std::string::npos);
  // Determinism: identical bytes across calls.
  CHECK(block == tags::render_information(passages));

  std::vector<Passage> one = {passages[0]};
  std::string single = tags::render_information(one);
  CHECK(single.find("Doc 1:") != std::string::npos);
  CHECK(single.find("Doc 2:") == std::string::npos);

  CHECK_THROWS(tags::render_information({}));
}

TEST_CASE("classify_turn") {
  CHECK(tags::classify_turn("<select_skill>a</select_skill>") ==
        tags::TurnKind::Selection);
  CHECK(tags::classify_turn(
            "<skill>relation-chain-decomposition</skill>\n"
            "<search>most populous city in the United States</search>") ==
        tags::TurnKind::Action);
  CHECK(tags::classify_turn("plain prose, nothing tagged") ==
        tags::TurnKind::Neither);
}

TEST_CASE("render and reparse are inverse for selections") {
  tags::SkillSelection sel{{"a-skill", "b-skill", "c"}};
  auto back = tags::parse_selection_turn(tags::render_selection(sel));
  REQUIRE(back.ok());
  CHECK(*back == sel);
}

namespace {

std::string random_identifier(std::mt19937_64& rng) {
  static const char* kAlpha = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::uniform_int_distribution<int> seg_count(1, 3);
  std::uniform_int_distribution<int> seg_len(1, 8);
  std::uniform_int_distribution<int> pick(0, 35);
  std::string out;
  int segs = seg_count(rng);
  for (int s = 0; s < segs; ++s) {
    if (s) out += '-';
    int len = seg_len(rng);
    for (int i = 0; i < len; ++i) out += kAlpha[pick(rng)];
  }
  return out;
}

std::string random_payload(std::mt19937_64& rng) {
  static const char* kChars =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ,.'?-\"";
  std::uniform_int_distribution<int> len_dist(1, 60);
  std::uniform_int_distribution<int> pick(0, 68);
  std::string out;
  int len = len_dist(rng);
  for (int i = 0; i < len; ++i) out += kChars[pick(rng)];
  // Payloads must not embed tag substrings and must survive trimming.
  if (out.find('<') != std::string::npos) out = "plain";
  std::string trimmed;
  size_t b = out.find_first_not_of(" \t\n");
  size_t e = out.find_last_not_of(" \t\n");
  if (b == std::string::npos) return "x";
  return out.substr(b, e - b + 1);
}

}  // namespace

TEST_CASE("10k action render/parse round-trips with zero mismatches") {
  std::mt19937_64 rng(20260825);
  std::uniform_int_distribution<int> n_skills(1, 3);
  std::uniform_int_distribution<int> coin(0, 1);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    tags::ParsedAction action;
    int n = n_skills(rng);
    for (int s = 0; s < n; ++s) action.skills.push_back(random_identifier(rng));
    action.kind = coin(rng) ? ActionKind::Search : ActionKind::Answer;
    action.payload = random_payload(rng);
    auto parsed = tags::parse_action_turn(tags::render_action(action));
    if (!parsed.ok() || !(*parsed == action)) ++mismatches;
  }
  CHECK(mismatches == 0);
}
