#pragma once

// Tokenization and hashed bag-of-token features.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tabret::text {

inline constexpr std::uint32_t kDefaultFeatureDim = 1u << 15;
inline constexpr std::uint32_t kMinFeatureDim = 1u << 10;

// Seeds for hash64 (see common.hpp). Changing these invalidates every model.
inline constexpr std::uint64_t kUnigramSeed = 0x756e6967726d3031ULL;  // "unigrm01"
inline constexpr std::uint64_t kBigramSeed = 0x626967726d303031ULL;   // "bigrm001"

// Lowercased tokens. Words are runs of letters/digits; a numeric run keeps
// internal '.' or ',' that sit between digits ("19.2", "1,500"). Bracketed
// upper-case markers such as "[ROW]" stay whole. Sentence punctuation is
// dropped; other ASCII symbols ("%", "$", "#") become one-character tokens.
std::vector<std::string> tokenize(std::string_view text);

bool is_numeric_token(std::string_view token);

struct SparseEntry {
  std::uint32_t index;
  double weight;
  bool operator==(const SparseEntry&) const = default;
};

struct SparseVector {
  std::uint32_t dim = 0;
  std::vector<SparseEntry> entries;  // sorted by index, no zero weights

  bool empty() const { return entries.empty(); }
  double norm() const;
  bool operator==(const SparseVector&) const = default;
};

struct HashOptions {
  bool bigrams = true;
};

void validate_feature_dim(std::uint32_t dim);

// Unit-norm hashed counts of unigrams (and adjacent bigrams); the zero vector
// for an empty token list.
SparseVector hash_features(const std::vector<std::string>& tokens, std::uint32_t dim,
                           HashOptions options = {});

// Raw (unnormalized) hashed counts, exposed for callers that compose vectors.
SparseVector hash_counts(const std::vector<std::string>& tokens, std::uint32_t dim,
                         HashOptions options = {});

std::uint32_t unigram_index(std::string_view token, std::uint32_t dim);
std::uint32_t bigram_index(std::string_view a, std::string_view b, std::uint32_t dim);

// Sums duplicate indices, drops zeros, sorts by index.
SparseVector make_sparse(std::uint32_t dim, std::vector<SparseEntry> raw);

void scale(SparseVector& v, double factor);

}  // namespace tabret::text
