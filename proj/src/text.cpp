#include "tabret/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "tabret/common.hpp"

namespace tabret::text {
namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

bool is_dropped_punct(unsigned char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?': case '\'': case '"':
    case '(': case ')': case '[': case ']': case '{': case '}': case '-': case '`':
      return true;
    default:
      return false;
  }
}

// "[ROW]" style marker starting at i; returns its length or 0.
std::size_t marker_length(std::string_view s, std::size_t i) {
  if (s[i] != '[') return 0;
  std::size_t j = i + 1;
  while (j < s.size() && ((s[j] >= 'A' && s[j] <= 'Z') || s[j] == '_')) ++j;
  if (j == i + 1 || j >= s.size() || s[j] != ']') return 0;
  return j - i + 1;
}

char lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (const std::size_t m = marker_length(s, i); m > 0) {
      std::string tok(s.substr(i, m));
      std::transform(tok.begin(), tok.end(), tok.begin(), lower);
      out.push_back(std::move(tok));
      i += m;
      continue;
    }
    if (is_word_byte(c)) {
      std::string tok;
      bool numeric = true;
      while (i < s.size()) {
        const auto ch = static_cast<unsigned char>(s[i]);
        if (is_word_byte(ch)) {
          numeric = numeric && is_digit(ch);
          tok.push_back(lower(static_cast<char>(ch)));
          ++i;
        } else if (numeric && (ch == '.' || ch == ',') && i + 1 < s.size() &&
                   is_digit(static_cast<unsigned char>(s[i + 1]))) {
          tok.push_back(static_cast<char>(ch));
          ++i;
        } else {
          break;
        }
      }
      out.push_back(std::move(tok));
      continue;
    }
    if (!is_dropped_punct(c)) out.emplace_back(1, static_cast<char>(c));
    ++i;
  }
  return out;
}

bool is_numeric_token(std::string_view token) {
  return !token.empty() && is_digit(static_cast<unsigned char>(token.front())) &&
         std::all_of(token.begin(), token.end(), [](char c) {
           return is_digit(static_cast<unsigned char>(c)) || c == '.' || c == ',';
         });
}

double SparseVector::norm() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.weight * e.weight;
  return std::sqrt(s);
}

void validate_feature_dim(std::uint32_t dim) {
  if (dim < kMinFeatureDim || (dim & (dim - 1)) != 0) {
    throw Error("feature dimension must be a power of two >= 1024, got " + std::to_string(dim));
  }
}

std::uint32_t unigram_index(std::string_view token, std::uint32_t dim) {
  return static_cast<std::uint32_t>(hash64(token, kUnigramSeed) & (dim - 1));
}

std::uint32_t bigram_index(std::string_view a, std::string_view b, std::uint32_t dim) {
  std::string key;
  key.reserve(a.size() + b.size() + 1);
  key.append(a);
  key.push_back('\x1f');
  key.append(b);
  return static_cast<std::uint32_t>(hash64(key, kBigramSeed) & (dim - 1));
}

SparseVector make_sparse(std::uint32_t dim, std::vector<SparseEntry> raw) {
  std::sort(raw.begin(), raw.end(),
            [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
  SparseVector v;
  v.dim = dim;
  for (const auto& e : raw) {
    if (e.index >= dim) throw Error("sparse index out of range");
    if (!v.entries.empty() && v.entries.back().index == e.index) {
      v.entries.back().weight += e.weight;
    } else {
      v.entries.push_back(e);
    }
  }
  std::erase_if(v.entries, [](const SparseEntry& e) { return e.weight == 0.0; });
  return v;
}

SparseVector hash_counts(const std::vector<std::string>& tokens, std::uint32_t dim,
                         HashOptions options) {
  validate_feature_dim(dim);
  std::vector<SparseEntry> raw;
  raw.reserve(tokens.size() * 2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    raw.push_back({unigram_index(tokens[i], dim), 1.0});
    if (options.bigrams && i + 1 < tokens.size()) {
      raw.push_back({bigram_index(tokens[i], tokens[i + 1], dim), 1.0});
    }
  }
  return make_sparse(dim, std::move(raw));
}

void scale(SparseVector& v, double factor) {
  for (auto& e : v.entries) e.weight *= factor;
}

SparseVector hash_features(const std::vector<std::string>& tokens, std::uint32_t dim,
                           HashOptions options) {
  SparseVector v = hash_counts(tokens, dim, options);
  const double n = v.norm();
  if (n > 0.0) scale(v, 1.0 / n);
  return v;
}

}  // namespace tabret::text
