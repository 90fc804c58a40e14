#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "tabret/common.hpp"
#include "tabret/text.hpp"

using namespace tabret;
using text::tokenize;

TEST_CASE("tokenize keeps decimals and splits symbols") {
  CHECK(tokenize("Funding is 19.2%") == std::vector<std::string>{"funding", "is", "19.2", "%"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("Sydney, Sydney") == std::vector<std::string>{"sydney", "sydney"});
  CHECK(tokenize("1,500 points.") == std::vector<std::string>{"1,500", "points"});
  CHECK(tokenize("Bids [ROW] City is Sydney ;") ==
        std::vector<std::string>{"bids", "[row]", "city", "is", "sydney"});
  CHECK(tokenize("$40,000 prize") == std::vector<std::string>{"$", "40,000", "prize"});
}

TEST_CASE("numeric tokens") {
  CHECK(text::is_numeric_token("19.2"));
  CHECK(text::is_numeric_token("1,500"));
  CHECK_FALSE(text::is_numeric_token("sydney"));
}

TEST_CASE("feature dimension validation") {
  CHECK_NOTHROW(text::validate_feature_dim(1024));
  CHECK_THROWS_AS(text::validate_feature_dim(512), Error);
  CHECK_THROWS_AS(text::validate_feature_dim(3000), Error);
  CHECK_THROWS_AS(text::hash_features({"a"}, 1000), Error);
}

TEST_CASE("hash_features is unit norm and deterministic") {
  CHECK(text::hash_features({}, 1024).empty());
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> toks;
    const auto n = 1 + rng.below(12);
    for (std::uint64_t i = 0; i < n; ++i) toks.push_back("w" + std::to_string(rng.below(30)));
    const auto v = text::hash_features(toks, 1024);
    CHECK(std::fabs(v.norm() - 1.0) < 1e-9);
    CHECK(v == text::hash_features(toks, 1024));
    for (std::size_t i = 1; i < v.entries.size(); ++i) CHECK(v.entries[i - 1].index < v.entries[i].index);
  }
}

TEST_CASE("unigram mass is permutation invariant") {
  std::vector<std::string> toks = {"highest", "points", "in", "the", "cup", "points"};
  auto shuffled = toks;
  std::reverse(shuffled.begin(), shuffled.end());
  const text::HashOptions uni{false};
  CHECK(text::hash_features(toks, 4096, uni) == text::hash_features(shuffled, 4096, uni));
  // bigrams make it order sensitive
  CHECK_FALSE(text::hash_features(toks, 4096) == text::hash_features(shuffled, 4096));
}

TEST_CASE("hashed indices are fixed constants") {
  // The hash is part of every persisted model; pin a couple of values.
  const auto a = text::unigram_index("sydney", 1u << 15);
  CHECK(a == (hash64("sydney", text::kUnigramSeed) & ((1u << 15) - 1)));
  CHECK(text::bigram_index("a", "b", 1024) != text::bigram_index("b", "a", 1024));
  CHECK(hash64("") == mix64(kFnvOffset));
}

TEST_CASE("make_sparse merges duplicates and drops zeros") {
  const auto v = text::make_sparse(1024, {{5, 1.0}, {2, 2.0}, {5, -1.0}, {7, 0.5}});
  REQUIRE(v.entries.size() == 2);
  CHECK(v.entries[0] == text::SparseEntry{2, 2.0});
  CHECK(v.entries[1] == text::SparseEntry{7, 0.5});
  CHECK_THROWS_AS(text::make_sparse(1024, {{2000, 1.0}}), Error);
}
