#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of these call into the code under test beyond plain data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tabret/common.hpp"
#include "tabret/retrieval.hpp"
#include "tabret/text.hpp"

namespace oracle {

// BM25 straight from the formula, one (query, doc) pair at a time. Query
// terms are the distinct tokens in first-occurrence order, which is also the
// index's summation order.
inline double bm25_pair(const std::vector<std::vector<std::string>>& docs, std::size_t doc,
                        const std::vector<std::string>& query_tokens, double k1, double b) {
  const double n = static_cast<double>(docs.size());
  double total_len = 0.0;
  for (const auto& d : docs) total_len += static_cast<double>(d.size());
  const double avgdl = total_len / n;
  std::vector<std::string> terms;
  for (const auto& t : query_tokens) {
    if (std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(t);
  }
  double score = 0.0;
  for (const auto& term : terms) {
    double df = 0.0;
    for (const auto& d : docs) {
      if (std::find(d.begin(), d.end(), term) != d.end()) df += 1.0;
    }
    if (df == 0.0) continue;
    const double tf = static_cast<double>(std::count(docs[doc].begin(), docs[doc].end(), term));
    if (tf == 0.0) continue;
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    const double dl = static_cast<double>(docs[doc].size());
    score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
  }
  return score;
}

// Sort every (score, ordinal) pair and keep the first k.
inline std::vector<tabret::ScoredBlock> full_sort_topk(const std::vector<double>& scores, std::size_t k,
                                                       bool positive_only = false) {
  std::vector<tabret::ScoredBlock> all;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive_only || scores[i] > 0.0) all.push_back({i, scores[i]});
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  if (all.size() > k) all.resize(k);
  return all;
}

// Naive scan over float rows with double accumulation.
inline std::vector<double> dense_scores(const std::vector<std::vector<float>>& rows,
                                        const std::vector<double>& q) {
  std::vector<double> out;
  for (const auto& r : rows) {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) s += static_cast<double>(r[j]) * q[j];
    out.push_back(s);
  }
  return out;
}

// Central differences of f at every coordinate listed in `coords`.
inline std::vector<double> central_diff(const std::function<double()>& f, const std::vector<double*>& coords,
                                        double h = 1e-6) {
  std::vector<double> g;
  g.reserve(coords.size());
  for (double* x : coords) {
    const double saved = *x;
    *x = saved + h;
    const double up = f();
    *x = saved - h;
    const double down = f();
    *x = saved;
    g.push_back((up - down) / (2.0 * h));
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

// Recall by enumeration: position of the first qualifying hit per question
// (0 = none), then count positions <= k.
inline double recall_from_positions(const std::vector<std::size_t>& first_hit, std::size_t k) {
  std::size_t hits = 0;
  for (auto p : first_hit) {
    if (p != 0 && p <= k) ++hits;
  }
  return first_hit.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(first_hit.size());
}

// Index of the k-th largest (descending = true) or k-th smallest value; ties
// are not expected in generated columns.
inline std::size_t kth_index(const std::vector<double>& v, std::size_t k, bool descending) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? v[a] > v[b] : v[a] < v[b];
  });
  return order.at(k);
}

}  // namespace oracle
