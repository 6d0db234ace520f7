#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "skillagent/passage.hpp"

namespace skillagent::env {

class RetrieverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Retriever {
 public:
  virtual ~Retriever() = default;

  /// Up to k passages, descending score, ties broken by ascending doc_id.
  virtual std::vector<Passage> retrieve(const std::string& query, int k) const = 0;
};

struct IndexConfig {
  /// Character budget for the whole information block; the per-passage cap
  /// at retrieval time is block_char_budget / k.
  size_t block_char_budget = 1400;
  /// Additive score bump per quoted phrase found verbatim in a document.
  double phrase_boost = 2.0;
};

/// Embedded lexical index: tf-idf with document-length normalization over
/// lowercased, punctuation-stripped tokens. Immutable after build.
class TfIdfIndex : public Retriever {
 public:
  static TfIdfIndex build(const std::filesystem::path& corpus_path,
                          IndexConfig config = {});
  static TfIdfIndex build_from_docs(std::vector<Passage> docs, IndexConfig config = {});

  std::vector<Passage> retrieve(const std::string& query, int k) const override;

  size_t size() const { return docs_.size(); }

 private:
  std::vector<Passage> docs_;
  std::vector<std::string> doc_fulltext_lower_;         // "title. text", lowercased
  std::vector<std::unordered_map<std::string, int>> term_freq_;
  std::vector<size_t> doc_len_;
  std::unordered_map<std::string, int> doc_freq_;
  double avg_len_ = 0.0;
  IndexConfig config_;
};

/// Line-delimited corpus records {doc_id, title, text}.
std::vector<Passage> load_corpus(const std::filesystem::path& path);

/// HTTP client for an external retriever service: POST {query, k} ->
/// {passages:[{doc_id, title, text, score}]}.
class HttpRetriever : public Retriever {
 public:
  HttpRetriever(std::string base_url, std::string path = "/retrieve",
                int timeout_sec = 30);

  std::vector<Passage> retrieve(const std::string& query, int k) const override;

 private:
  std::string base_url_;
  std::string path_;
  int timeout_sec_;
};

}  // namespace skillagent::env
