#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "tabret/bm25.hpp"
#include "tabret/text.hpp"

using namespace tabret;

namespace {

std::vector<std::vector<std::string>> random_docs(std::size_t n, Rng& rng) {
  std::vector<std::vector<std::string>> docs(n);
  for (auto& d : docs) {
    const auto len = 3 + rng.below(25);
    for (std::uint64_t i = 0; i < len; ++i) d.push_back("w" + std::to_string(rng.below(60)));
  }
  return docs;
}

}  // namespace

TEST_CASE("bm25 scores equal the per-pair formula") {
  Rng rng(99);
  const auto docs = random_docs(100, rng);
  for (const Bm25Params params : {Bm25Params{}, Bm25Params{0.9, 0.4}, Bm25Params{2.0, 1.0}}) {
    const auto index = Bm25Index::build(docs, params);
    for (int q = 0; q < 30; ++q) {
      std::string query;
      for (int i = 0; i < 4; ++i) query += "w" + std::to_string(rng.below(70)) + " ";
      const auto scores = index.scores(query);
      for (std::size_t d = 0; d < docs.size(); ++d) {
        CHECK(scores[d] == oracle::bm25_pair(docs, d, text::tokenize(query), params.k1, params.b));
      }
    }
  }
}

TEST_CASE("bm25 df, topk order and zero exclusion") {
  const auto index = Bm25Index::build({{"a", "b"}, {"a", "c"}, {"a", "b", "b"}}, {});
  CHECK(index.df("a") == 3);
  CHECK(index.df("zzz") == 0);
  CHECK(index.avg_doc_length() == doctest::Approx(7.0 / 3.0));
  CHECK(index.topk("nothing here", 5).empty());
  const auto all = index.topk("b c", 3);
  CHECK(all.size() == 3);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].score >= all[i].score);
  CHECK_THROWS_AS(index.topk("b", 0), Error);

  // identical documents tie; lower ordinal first
  const auto tied = Bm25Index::build({{"x", "y"}, {"z"}, {"x", "y"}}, {});
  const auto hits = tied.topk("x", 3);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].ordinal == 0);
  CHECK(hits[1].ordinal == 2);
}

TEST_CASE("bm25 build errors") {
  CHECK_THROWS_AS(Bm25Index::build(std::vector<std::vector<std::string>>{}, {}), Error);
  CHECK_THROWS_AS(Bm25Index::build({{"a"}}, {0.0, 0.5}), Error);
  CHECK_THROWS_AS(Bm25Index::build({{"a"}}, {1.2, 1.5}), Error);
}

TEST_CASE("bm25 persistence") {
  const auto blocks = build_fused_blocks(fixture::bids_corpus());
  const auto index = Bm25Index::build(blocks);
  fixture::TempDir dir("bm25");
  index.save(dir.file("bm25.idx"));
  const auto back = Bm25Index::load(dir.file("bm25.idx"));
  CHECK(back == index);
  CHECK(back.serialize() == index.serialize());
  CHECK(back.topk("Sydney round", 10) == index.topk("Sydney round", 10));

  auto bytes = index.serialize();
  bytes[0] = 'X';
  CHECK_THROWS_AS(Bm25Index::deserialize(bytes), Error);
  CHECK_THROWS_AS(Bm25Index::deserialize(index.serialize().substr(0, 20)), Error);
}
