#include "skillagent/text.hpp"

#include <algorithm>
#include <cctype>

namespace skillagent::text {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : s) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::unordered_set<std::string> token_set(std::string_view s) {
  auto toks = tokenize(s);
  return {toks.begin(), toks.end()};
}

double jaccard(const std::unordered_set<std::string>& a,
               const std::unordered_set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  size_t inter = 0;
  for (const auto& t : a)
    if (b.count(t)) ++inter;
  size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::string> quoted_phrases(std::string_view s) {
  std::vector<std::string> phrases;
  size_t pos = 0;
  while (true) {
    size_t open = s.find('"', pos);
    if (open == std::string_view::npos) break;
    size_t close = s.find('"', open + 1);
    if (close == std::string_view::npos) break;
    if (close > open + 1) phrases.emplace_back(s.substr(open + 1, close - open - 1));
    pos = close + 1;
  }
  return phrases;
}

bool is_kebab_identifier(std::string_view s) {
  if (s.empty()) return false;
  bool prev_dash = true;  // leading dash is illegal
  for (char ch : s) {
    if (ch == '-') {
      if (prev_dash) return false;
      prev_dash = true;
    } else if ((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9')) {
      prev_dash = false;
    } else {
      return false;
    }
  }
  return !prev_dash;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split_trimmed(std::string_view s, char sep) {
  std::vector<std::string> pieces;
  size_t start = 0;
  while (start <= s.size()) {
    size_t end = s.find(sep, start);
    if (end == std::string_view::npos) end = s.size();
    auto piece = trim(s.substr(start, end - start));
    if (!piece.empty()) pieces.push_back(std::move(piece));
    if (end == s.size()) break;
    start = end + 1;
  }
  return pieces;
}

}  // namespace skillagent::text
