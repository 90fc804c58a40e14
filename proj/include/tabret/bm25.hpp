#pragma once

// Okapi BM25 over fused-block text.

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tabret/corpus.hpp"
#include "tabret/retrieval.hpp"

namespace tabret {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct Posting {
  std::uint32_t ordinal;
  std::uint32_t tf;
  bool operator==(const Posting&) const = default;
};

class Bm25Index {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  // Indexes tokenize(linearized_text) of every block, in ordinal order.
  static Bm25Index build(const BlockStore& blocks, Bm25Params params = {});
  static Bm25Index build(const std::vector<std::vector<std::string>>& docs, Bm25Params params);

  std::size_t doc_count() const { return doc_lengths_.size(); }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
  double avg_doc_length() const { return avg_doc_length_; }
  const Bm25Params& params() const { return params_; }

  std::uint32_t df(std::string_view term) const;
  // ln(1 + (N - df + 0.5) / (df + 0.5))
  double idf(std::string_view term) const;
  const std::vector<Posting>* postings(std::string_view term) const;

  // Distinct query terms in first-occurrence order; scoring sums over them.
  static std::vector<std::string> query_terms(std::string_view query);

  // Score of every document; zero where no query term occurs.
  std::vector<double> scores(std::string_view query) const;

  // Positive-score documents, descending score, ties by ascending ordinal.
  std::vector<ScoredBlock> topk(std::string_view query, std::size_t k) const;

  std::string serialize() const;
  static Bm25Index deserialize(std::string bytes, const std::string& source = "<bm25>");
  void save(const std::string& path) const;
  static Bm25Index load(const std::string& path);

  bool operator==(const Bm25Index& o) const {
    return params_.k1 == o.params_.k1 && params_.b == o.params_.b && terms_ == o.terms_ &&
           postings_ == o.postings_ && doc_lengths_ == o.doc_lengths_;
  }

 private:
  void finalize();

  Bm25Params params_;
  std::vector<std::string> terms_;  // sorted
  std::vector<std::vector<Posting>> postings_;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_doc_length_ = 0.0;
};

}  // namespace tabret
