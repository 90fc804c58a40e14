#pragma once

// Block recall@k and table recall@k over ranked retrieval results.

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabret/corpus.hpp"
#include "tabret/retrieval.hpp"

namespace tabret::eval {

struct Gold {
  std::string table_id;
  std::string answer;
};

using GoldMap = std::unordered_map<std::string, Gold>;

GoldMap gold_from_instances(const std::vector<QAInstance>& instances);

inline const std::vector<std::size_t> kDefaultKs = {1, 10, 15, 20};

// Number of gold questions with a hit in the top k. Questions absent from
// `results` are misses; a result without a gold entry is an error.
std::size_t table_hits_at_k(const std::vector<RetrievalResult>& results, const GoldMap& gold,
                            const BlockStore& blocks, std::size_t k);
std::size_t block_hits_at_k(const std::vector<RetrievalResult>& results, const GoldMap& gold,
                            const BlockStore& blocks, std::size_t k);

double table_recall_at_k(const std::vector<RetrievalResult>& results, const GoldMap& gold,
                         const BlockStore& blocks, std::size_t k);
double block_recall_at_k(const std::vector<RetrievalResult>& results, const GoldMap& gold,
                         const BlockStore& blocks, std::size_t k);

struct EvalReport {
  std::string name;
  std::vector<std::size_t> ks;
  std::vector<std::size_t> block_hits, table_hits;
  std::vector<double> block_recall, table_recall;
  std::size_t question_count = 0;
  std::size_t missing = 0;  // gold questions without a result list
  std::string fingerprint;

  double block_at(std::size_t k) const;
  double table_at(std::size_t k) const;
};

// ks must be non-empty, positive and strictly increasing.
void validate_ks(const std::vector<std::size_t>& ks);

EvalReport evaluate(std::string name, const std::vector<RetrievalResult>& results,
                    const GoldMap& gold, const BlockStore& blocks,
                    const std::vector<std::size_t>& ks = kDefaultKs, std::string fingerprint = "");

// One JSON record per report line.
std::string report_records(const std::vector<EvalReport>& reports);
// Aligned plain-text table, one row per report.
std::string report_table(const std::vector<EvalReport>& reports);

}  // namespace tabret::eval
