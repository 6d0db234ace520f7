#include "skillagent/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

#include "skillagent/text.hpp"

namespace skillagent::env {

std::vector<Passage> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RetrieverError("cannot open corpus file: " + path.string());
  std::vector<Passage> docs;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      Passage p;
      p.doc_id = j.at("doc_id").get<std::string>();
      p.title = j.value("title", "");
      p.text = j.at("text").get<std::string>();
      docs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw RetrieverError("malformed corpus record at " + path.string() + ":" +
                           std::to_string(lineno) + ": " + e.what());
    }
  }
  return docs;
}

TfIdfIndex TfIdfIndex::build(const std::filesystem::path& corpus_path,
                             IndexConfig config) {
  return build_from_docs(load_corpus(corpus_path), config);
}

TfIdfIndex TfIdfIndex::build_from_docs(std::vector<Passage> docs, IndexConfig config) {
  if (docs.empty()) throw RetrieverError("empty corpus");
  TfIdfIndex index;
  index.config_ = config;

  std::unordered_set<std::string> ids;
  size_t total_len = 0;
  for (const auto& doc : docs) {
    if (doc.doc_id.empty()) throw RetrieverError("corpus record with empty doc_id");
    if (doc.text.empty()) {
      throw RetrieverError("corpus record with empty text: " + doc.doc_id);
    }
    if (!ids.insert(doc.doc_id).second) {
      throw RetrieverError("duplicate doc_id in corpus: " + doc.doc_id);
    }
    std::string full = doc.title + ". " + doc.text;
    auto tokens = text::tokenize(full);
    std::unordered_map<std::string, int> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, _] : tf) ++index.doc_freq_[term];
    total_len += tokens.size();
    index.doc_len_.push_back(tokens.size());
    index.term_freq_.push_back(std::move(tf));
    index.doc_fulltext_lower_.push_back(text::to_lower(full));
  }
  index.avg_len_ = static_cast<double>(total_len) / static_cast<double>(docs.size());
  index.docs_ = std::move(docs);
  return index;
}

std::vector<Passage> TfIdfIndex::retrieve(const std::string& query, int k) const {
  if (k < 1) throw RetrieverError("retrieve: k must be >= 1");
  auto terms = text::tokenize(query);
  if (terms.empty()) throw RetrieverError("empty query after normalization");

  std::unordered_map<std::string, int> query_tf;
  for (const auto& t : terms) ++query_tf[t];

  std::vector<std::string> phrases;
  for (const auto& p : text::quoted_phrases(query)) {
    phrases.push_back(text::to_lower(p));
  }

  const double n_docs = static_cast<double>(docs_.size());
  std::vector<std::pair<double, size_t>> scored;
  for (size_t d = 0; d < docs_.size(); ++d) {
    double score = 0.0;
    const double norm_len = static_cast<double>(doc_len_[d]) / avg_len_;
    for (const auto& [term, qtf] : query_tf) {
      auto it = term_freq_[d].find(term);
      if (it == term_freq_[d].end()) continue;
      auto df_it = doc_freq_.find(term);
      const double df = static_cast<double>(df_it->second);
      const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
      const double tf = static_cast<double>(it->second);
      score += qtf * idf * tf / (tf + 0.5 + 1.5 * norm_len);
    }
    if (score <= 0.0) continue;
    for (const auto& phrase : phrases) {
      if (doc_fulltext_lower_[d].find(phrase) != std::string::npos) {
        score += config_.phrase_boost;
      }
    }
    scored.emplace_back(score, d);
  }

  std::sort(scored.begin(), scored.end(), [this](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return docs_[a.second].doc_id < docs_[b.second].doc_id;
  });

  const size_t cap =
      config_.block_char_budget > 0
          ? std::max<size_t>(1, config_.block_char_budget / static_cast<size_t>(k))
          : 0;
  std::vector<Passage> results;
  for (size_t i = 0; i < scored.size() && i < static_cast<size_t>(k); ++i) {
    Passage p = docs_[scored[i].second];
    p.score = scored[i].first;
    if (cap > 0 && p.text.size() > cap) p.text.resize(cap);
    results.push_back(std::move(p));
  }
  return results;
}

HttpRetriever::HttpRetriever(std::string base_url, std::string path, int timeout_sec)
    : base_url_(std::move(base_url)), path_(std::move(path)), timeout_sec_(timeout_sec) {}

std::vector<Passage> HttpRetriever::retrieve(const std::string& query, int k) const {
  httplib::Client client(base_url_);
  client.set_read_timeout(timeout_sec_, 0);
  nlohmann::json body = {{"query", query}, {"k", k}};
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw RetrieverError("retriever request failed: " + base_url_ + path_);
  if (res->status != 200) {
    throw RetrieverError("retriever returned status " + std::to_string(res->status));
  }
  std::vector<Passage> passages;
  try {
    auto doc = nlohmann::json::parse(res->body);
    for (const auto& j : doc.at("passages")) {
      Passage p;
      p.doc_id = j.at("doc_id").get<std::string>();
      p.title = j.value("title", "");
      p.text = j.at("text").get<std::string>();
      p.score = j.value("score", 0.0);
      passages.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw RetrieverError(std::string("retriever response parse failure: ") + e.what());
  }
  return passages;
}

}  // namespace skillagent::env
