#include "tabret/bm25.hpp"

#include <cmath>
#include <map>
#include <unordered_set>

#include "tabret/binio.hpp"
#include "tabret/common.hpp"
#include "tabret/text.hpp"

namespace tabret {

Bm25Index Bm25Index::build(const BlockStore& blocks, Bm25Params params) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(blocks.size());
  for (const auto& b : blocks.blocks()) docs.push_back(text::tokenize(b.linearized_text));
  return build(docs, params);
}

Bm25Index Bm25Index::build(const std::vector<std::vector<std::string>>& docs,
                           Bm25Params params) {
  if (docs.empty()) throw Error("bm25: cannot index an empty block list");
  if (!(params.k1 > 0.0)) throw Error("bm25: k1 must be positive");
  if (!(params.b >= 0.0 && params.b <= 1.0)) throw Error("bm25: b must lie in [0, 1]");

  Bm25Index idx;
  idx.params_ = params;
  std::map<std::string, std::vector<Posting>> inverted;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    std::map<std::string_view, std::uint32_t> tf;
    for (const auto& t : docs[d]) ++tf[t];
    for (const auto& [term, count] : tf) {
      inverted[std::string(term)].push_back({static_cast<std::uint32_t>(d), count});
    }
    idx.doc_lengths_.push_back(static_cast<std::uint32_t>(docs[d].size()));
  }
  for (auto& [term, plist] : inverted) {
    idx.terms_.push_back(term);
    idx.postings_.push_back(std::move(plist));
  }
  idx.finalize();
  return idx;
}

void Bm25Index::finalize() {
  term_ids_.clear();
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    term_ids_.emplace(terms_[i], static_cast<std::uint32_t>(i));
  }
  double total = 0.0;
  for (auto len : doc_lengths_) total += len;
  avg_doc_length_ = doc_lengths_.empty() ? 0.0 : total / static_cast<double>(doc_lengths_.size());
}

const std::vector<Posting>* Bm25Index::postings(std::string_view term) const {
  auto it = term_ids_.find(std::string(term));
  return it == term_ids_.end() ? nullptr : &postings_[it->second];
}

std::uint32_t Bm25Index::df(std::string_view term) const {
  const auto* p = postings(term);
  return p ? static_cast<std::uint32_t>(p->size()) : 0u;
}

double Bm25Index::idf(std::string_view term) const {
  const double n = static_cast<double>(doc_count());
  const double d = static_cast<double>(df(term));
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

std::vector<std::string> Bm25Index::query_terms(std::string_view query) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& t : text::tokenize(query)) {
    if (seen.insert(t).second) out.push_back(std::move(t));
  }
  return out;
}

std::vector<double> Bm25Index::scores(std::string_view query) const {
  std::vector<double> acc(doc_count(), 0.0);
  const double k1 = params_.k1;
  const double b = params_.b;
  for (const auto& term : query_terms(query)) {
    const auto* plist = postings(term);
    if (plist == nullptr) continue;
    const double w = idf(term);
    for (const auto& p : *plist) {
      const double tf = p.tf;
      const double norm = k1 * (1.0 - b + b * doc_lengths_[p.ordinal] / avg_doc_length_);
      acc[p.ordinal] += w * (tf * (k1 + 1.0)) / (tf + norm);
    }
  }
  return acc;
}

std::vector<ScoredBlock> Bm25Index::topk(std::string_view query, std::size_t k) const {
  if (k < 1) throw Error("bm25_topk: k must be >= 1");
  const auto s = scores(query);
  return select_topk(s, k, [](std::size_t, double v) { return v > 0.0; });
}

// Layout (little-endian):
//   "BM25" u32 version f64 k1 f64 b u32 N u32 doc_length[N]
//   u32 term_count { str term u32 df { u32 ordinal u32 tf }[df] }[term_count]
std::string Bm25Index::serialize() const {
  BinaryWriter w;
  w.magic("BM25");
  w.u32(kFormatVersion);
  w.f64(params_.k1);
  w.f64(params_.b);
  w.u32(static_cast<std::uint32_t>(doc_lengths_.size()));
  for (auto len : doc_lengths_) w.u32(len);
  w.u32(static_cast<std::uint32_t>(terms_.size()));
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    w.str(terms_[i]);
    w.u32(static_cast<std::uint32_t>(postings_[i].size()));
    for (const auto& p : postings_[i]) {
      w.u32(p.ordinal);
      w.u32(p.tf);
    }
  }
  return w.bytes();
}

Bm25Index Bm25Index::deserialize(std::string bytes, const std::string& source) {
  BinaryReader r(std::move(bytes), source);
  r.expect_magic("BM25");
  r.expect_version(kFormatVersion);
  Bm25Index idx;
  idx.params_.k1 = r.f64();
  idx.params_.b = r.f64();
  const std::uint32_t n = r.u32();
  idx.doc_lengths_.resize(n);
  for (auto& len : idx.doc_lengths_) len = r.u32();
  const std::uint32_t terms = r.u32();
  idx.terms_.reserve(terms);
  idx.postings_.reserve(terms);
  for (std::uint32_t i = 0; i < terms; ++i) {
    idx.terms_.push_back(r.str());
    const std::uint32_t df = r.u32();
    std::vector<Posting> plist(df);
    for (auto& p : plist) {
      p.ordinal = r.u32();
      p.tf = r.u32();
      if (p.ordinal >= n) throw Error(source + ": posting ordinal out of range");
    }
    idx.postings_.push_back(std::move(plist));
  }
  r.expect_end();
  idx.finalize();
  return idx;
}

void Bm25Index::save(const std::string& path) const { write_file_atomic(path, serialize()); }

Bm25Index Bm25Index::load(const std::string& path) { return deserialize(read_file(path), path); }

}  // namespace tabret
