#include "tabret/eval.hpp"

#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "tabret/common.hpp"

namespace tabret::eval {
namespace {

using json = nlohmann::json;

template <typename Hit>
std::size_t count_hits(const std::vector<RetrievalResult>& results, const GoldMap& gold,
                       const BlockStore& blocks, std::size_t k, Hit&& hit) {
  if (k < 1) throw Error("recall: k must be >= 1");
  std::unordered_set<std::string> seen;
  std::size_t hits = 0;
  for (const auto& r : results) {
    auto g = gold.find(r.question_id);
    if (g == gold.end()) throw Error("no gold entry for question " + r.question_id);
    if (!seen.insert(r.question_id).second) throw Error("duplicate results for question " + r.question_id);
    const std::size_t n = std::min(k, r.hits.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (r.hits[i].ordinal >= blocks.size()) throw Error("result ordinal out of range");
      if (hit(blocks[r.hits[i].ordinal], g->second)) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

double ratio(std::size_t hits, const GoldMap& gold) {
  return gold.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(gold.size());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

GoldMap gold_from_instances(const std::vector<QAInstance>& instances) {
  GoldMap g;
  for (const auto& inst : instances) {
    if (!g.emplace(inst.question_id, Gold{inst.table_id, inst.answer}).second) {
      throw Error("duplicate question id " + inst.question_id);
    }
  }
  return g;
}

std::size_t table_hits_at_k(const std::vector<RetrievalResult>& results, const GoldMap& gold,
                            const BlockStore& blocks, std::size_t k) {
  return count_hits(results, gold, blocks, k,
                    [](const FusedBlock& b, const Gold& g) { return b.table_id == g.table_id; });
}

std::size_t block_hits_at_k(const std::vector<RetrievalResult>& results, const GoldMap& gold,
                            const BlockStore& blocks, std::size_t k) {
  return count_hits(results, gold, blocks, k, [](const FusedBlock& b, const Gold& g) {
    return b.table_id == g.table_id && answer_match(b, g.answer);
  });
}

double table_recall_at_k(const std::vector<RetrievalResult>& results, const GoldMap& gold,
                         const BlockStore& blocks, std::size_t k) {
  return ratio(table_hits_at_k(results, gold, blocks, k), gold);
}

double block_recall_at_k(const std::vector<RetrievalResult>& results, const GoldMap& gold,
                         const BlockStore& blocks, std::size_t k) {
  return ratio(block_hits_at_k(results, gold, blocks, k), gold);
}

void validate_ks(const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw Error("k set is empty");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1) throw Error("k values must be >= 1");
    if (i > 0 && ks[i] <= ks[i - 1]) throw Error("k values must be strictly increasing");
  }
}

double EvalReport::block_at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return block_recall[i];
  }
  throw Error("report " + name + " has no k=" + std::to_string(k));
}

double EvalReport::table_at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return table_recall[i];
  }
  throw Error("report " + name + " has no k=" + std::to_string(k));
}

EvalReport evaluate(std::string name, const std::vector<RetrievalResult>& results,
                    const GoldMap& gold, const BlockStore& blocks,
                    const std::vector<std::size_t>& ks, std::string fingerprint) {
  validate_ks(ks);
  EvalReport rep;
  rep.name = std::move(name);
  rep.ks = ks;
  rep.question_count = gold.size();
  rep.fingerprint = std::move(fingerprint);
  std::unordered_set<std::string> answered;
  for (const auto& r : results) answered.insert(r.question_id);
  for (const auto& [qid, g] : gold) {
    if (!answered.count(qid)) ++rep.missing;
  }
  for (std::size_t k : ks) {
    rep.block_hits.push_back(block_hits_at_k(results, gold, blocks, k));
    rep.table_hits.push_back(table_hits_at_k(results, gold, blocks, k));
    rep.block_recall.push_back(ratio(rep.block_hits.back(), gold));
    rep.table_recall.push_back(ratio(rep.table_hits.back(), gold));
  }
  return rep;
}

std::string report_records(const std::vector<EvalReport>& reports) {
  std::string out;
  for (const auto& r : reports) {
    json j = {{"name", r.name},
              {"questions", r.question_count},
              {"missing", r.missing},
              {"fingerprint", r.fingerprint},
              {"k", r.ks},
              {"block_recall", r.block_recall},
              {"table_recall", r.table_recall}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string report_table(const std::vector<EvalReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head = {"report", "questions"};
  if (!reports.empty()) {
    for (std::size_t k : reports.front().ks) head.push_back("block@" + std::to_string(k));
    for (std::size_t k : reports.front().ks) head.push_back("table@" + std::to_string(k));
  }
  rows.push_back(head);
  for (const auto& r : reports) {
    std::vector<std::string> row = {r.name, std::to_string(r.question_count)};
    for (double v : r.block_recall) row.push_back(fmt(v));
    for (double v : r.table_recall) row.push_back(fmt(v));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) os << "  ";
      if (c == 0) {
        os << row[c] << std::string(width[c] - row[c].size(), ' ');
      } else {
        os << std::string(width[c] - row[c].size(), ' ') << row[c];
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace tabret::eval
