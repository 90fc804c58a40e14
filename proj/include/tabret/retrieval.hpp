#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tabret {

struct ScoredBlock {
  std::size_t ordinal = 0;
  double score = 0.0;
  bool operator==(const ScoredBlock&) const = default;
};

// Ranked hits for one question, descending score, ties by ascending ordinal.
struct RetrievalResult {
  std::string question_id;
  std::vector<ScoredBlock> hits;
};

// Exact top-k of a dense score array: descending score, ascending ordinal on
// ties. Entries rejected by `keep` are skipped.
template <typename Keep>
std::vector<ScoredBlock> select_topk(std::span<const double> scores, std::size_t k, Keep&& keep);

std::vector<ScoredBlock> select_topk(std::span<const double> scores, std::size_t k);

inline bool ranks_before(const ScoredBlock& a, const ScoredBlock& b) {
  return a.score > b.score || (a.score == b.score && a.ordinal < b.ordinal);
}

}  // namespace tabret

#include <algorithm>

namespace tabret {

template <typename Keep>
std::vector<ScoredBlock> select_topk(std::span<const double> scores, std::size_t k, Keep&& keep) {
  std::vector<ScoredBlock> all;
  all.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (keep(i, scores[i])) all.push_back({i, scores[i]});
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    ranks_before);
  all.resize(n);
  return all;
}

inline std::vector<ScoredBlock> select_topk(std::span<const double> scores, std::size_t k) {
  return select_topk(scores, k, [](std::size_t, double) { return true; });
}

}  // namespace tabret
