#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace skillagent::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Lowercased, punctuation-stripped word tokens. Shared by the lexical
/// retriever, answer normalization, and the query diagnostics.
std::vector<std::string> tokenize(std::string_view s);

std::unordered_set<std::string> token_set(std::string_view s);

/// Token-set Jaccard similarity in [0,1]. Empty-vs-empty is 1.
double jaccard(const std::unordered_set<std::string>& a,
               const std::unordered_set<std::string>& b);

/// Double-quoted phrases in a query, quotes removed.
std::vector<std::string> quoted_phrases(std::string_view s);

bool is_kebab_identifier(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Comma/pipe style splitting with per-piece trimming; empty pieces dropped.
std::vector<std::string> split_trimmed(std::string_view s, char sep);

}  // namespace skillagent::text
