#pragma once

// Tables, passages, entity links, fused blocks and QA instances, plus the
// line-delimited record files they are loaded from.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tabret {

struct Table {
  std::string table_id;
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column_count() const { return header.size(); }
};

struct Passage {
  std::string passage_id;
  std::string title;
  std::string text;
};

struct EntityLink {
  std::string table_id;
  std::size_t row_index = 0;
  std::string passage_id;
};

class Corpus {
 public:
  Corpus() = default;
  // Validates every invariant; throws tabret::Error on the first violation.
  Corpus(std::vector<Table> tables, std::vector<Passage> passages, std::vector<EntityLink> links);

  const std::vector<Table>& tables() const { return tables_; }
  const std::vector<Passage>& passages() const { return passages_; }
  const std::vector<EntityLink>& links() const { return links_; }

  const Table* find_table(std::string_view id) const;
  const Passage* find_passage(std::string_view id) const;
  std::size_t table_index(std::string_view id) const;

 private:
  std::vector<Table> tables_;
  std::vector<Passage> passages_;
  std::vector<EntityLink> links_;
  std::unordered_map<std::string, std::size_t> table_by_id_;
  std::unordered_map<std::string, std::size_t> passage_by_id_;
};

struct FusedBlock {
  std::string block_id;
  std::string table_id;
  std::size_t row_index = 0;
  std::string title;
  std::vector<std::string> header;
  std::vector<std::string> row_cells;
  std::vector<Passage> passages;
  std::string linearized_text;
};

// Deterministic id for the block built from (table_id, row_index).
std::string make_block_id(std::string_view table_id, std::size_t row_index);

// Blocks ordered by (table_id, row_index); a block's ordinal is its position.
class BlockStore {
 public:
  BlockStore() = default;
  explicit BlockStore(std::vector<FusedBlock> blocks);

  const std::vector<FusedBlock>& blocks() const { return blocks_; }
  const FusedBlock& operator[](std::size_t ordinal) const { return blocks_[ordinal]; }
  std::size_t size() const { return blocks_.size(); }
  bool empty() const { return blocks_.empty(); }

  // Throws for unknown ids.
  std::size_t ordinal(std::string_view block_id) const;
  std::optional<std::size_t> find(std::string_view block_id) const;
  // Ordinals of every block of a table, in row order; empty if unknown.
  const std::vector<std::size_t>& table_blocks(std::string_view table_id) const;

 private:
  std::vector<FusedBlock> blocks_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_table_;
};

// One block per table row; each block's passages are the row's links in
// links-file order, deduplicated by passage_id.
BlockStore build_fused_blocks(const Corpus& corpus);

// "<title> [ROW] <h> is <cell> ; ... [PASSAGE] <title> : <text> ..."
std::string linearize_block(const FusedBlock& block);

// Lowercased, whitespace-split tokens with leading/trailing punctuation
// stripped; empty tokens are dropped.
std::vector<std::string> normalize_for_match(std::string_view text);

// True iff the normalized answer is a contiguous token run of the block's
// normalized text. Throws on an answer that normalizes to nothing.
bool answer_match(const FusedBlock& block, std::string_view answer);
bool answer_match(const std::vector<std::string>& normalized_text,
                  const std::vector<std::string>& normalized_answer);

// Fallback linker: a row links to every passage whose normalized title equals
// one of the row's normalized cells.
std::vector<EntityLink> lexical_links(const std::vector<Table>& tables,
                                      const std::vector<Passage>& passages);

struct QAInstance {
  std::string question_id;
  std::string question;
  std::string answer;
  std::string table_id;
  std::vector<std::size_t> blocks;         // B: ordinals of the table's blocks
  std::optional<std::size_t> oracle_block;  // synthetic corpora only
  std::vector<std::size_t> answer_blocks;   // subset of `blocks` matching the answer
};

// Resolves B and answer_blocks against the block store. Throws on an unknown
// table, an empty answer, or an oracle block outside B.
QAInstance make_instance(std::string question_id, std::string question, std::string answer,
                         std::string table_id, std::optional<std::string> oracle_block_id,
                         const BlockStore& blocks);

// --- Record files ---------------------------------------------------------

std::vector<Table> read_tables(const std::string& path);
std::vector<Passage> read_passages(const std::string& path);
std::vector<EntityLink> read_links(const std::string& path);

Corpus load_corpus(const std::string& tables_path, const std::string& passages_path,
                   const std::string& links_path);

std::vector<QAInstance> load_qa(const std::string& path, const BlockStore& blocks);

std::string table_record(const Table& t);
std::string passage_record(const Passage& p);
std::string link_record(const EntityLink& l);

}  // namespace tabret
