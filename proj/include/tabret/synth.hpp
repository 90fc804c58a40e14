#pragma once

// Deterministic synthetic table-text corpora with oracle block labels.
// Tables have one entity column and a few numeric columns; each entity has a
// passage linked to every row it occupies. Questions come in three kinds:
// lookups with a unique answer row, ambiguous lookups whose answer entity is
// planted in several rows of the table, and superlatives over one numeric
// column.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tabret/corpus.hpp"

namespace tabret::synth {

struct SynthConfig {
  std::uint64_t seed = 2024;
  std::size_t n_tables = 300;
  std::size_t rows_min = 6;
  std::size_t rows_max = 12;
  std::size_t n_numeric_columns = 2;
  std::size_t entity_vocab = 300;
  std::size_t n_questions = 5000;
  double frac_lookup = 0.45;
  double frac_ambiguous = 0.35;
  double frac_superlative = 0.20;
  std::size_t multiplicity_min = 2;
  std::size_t multiplicity_max = 3;
  std::size_t groups_per_table = 2;
  double superlative_ambiguity = 0.25;  // share of superlatives whose answer is planted elsewhere
  double train_frac = 0.7;
  double dev_frac = 0.1;
  // Assign whole tables to splits so no test question shares a table (and so
  // an answer entity group) with a training question.
  bool split_by_table = true;

  // Throws tabret::Error describing the first problem.
  void validate() const;
};

enum class Archetype { lookup, ambiguous, superlative };

std::string archetype_name(Archetype a);
Archetype parse_archetype(std::string_view s);

struct SynthQuestion {
  std::string question_id;
  std::string question;
  std::string answer;
  std::string table_id;
  std::string oracle_block;
  Archetype archetype = Archetype::lookup;
  std::string split;  // train / dev / test
  std::size_t multiplicity = 1;  // rows of the table holding the answer entity
};

struct SynthData {
  std::vector<Table> tables;
  std::vector<Passage> passages;
  std::vector<EntityLink> links;
  std::vector<SynthQuestion> questions;
  std::size_t expected_d1 = 0;  // questions whose answer entity occupies one row
};

SynthData generate(const SynthConfig& config);

struct SplitManifest {
  std::map<std::string, std::vector<std::string>> splits;  // split -> question ids
  std::map<std::string, std::string> archetypes;           // question id -> tag
  std::size_t expected_d1 = 0;
};

// tables.jsonl, passages.jsonl, links.jsonl, qa.jsonl and manifest.json.
void write_synth(const SynthData& data, const SynthConfig& config, const std::string& dir);
std::string qa_records(const std::vector<SynthQuestion>& questions);
std::string manifest_json(const SynthData& data, const SynthConfig& config);
SplitManifest read_manifest(const std::string& path);

// Random numeric columns (mixed scales and distributions, 3..max_len values)
// for training and testing the rank encoder in isolation.
std::vector<std::vector<double>> numeric_columns(std::size_t n, std::uint64_t seed,
                                                 std::size_t max_len = 40);

}  // namespace tabret::synth
