#include "tabret/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "tabret/common.hpp"

namespace tabret {
namespace {

using json = nlohmann::json;

std::string collapse_spaces(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(c);
    }
  }
  return out;
}

void append_piece(std::string& out, std::string_view piece) {
  const std::string p = collapse_spaces(piece);
  if (p.empty()) return;
  if (!out.empty()) out.push_back(' ');
  out += p;
}

// Calls fn(record, line_number) for each non-blank line of a JSONL file.
template <typename Fn>
void for_each_record(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    try {
      if (!rec.is_object()) throw Error("record is not an object");
      fn(rec, line_no);
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      const std::string msg = e.what();
      if (msg.rfind(path, 0) == 0) throw;
      throw Error(path + ":" + std::to_string(line_no) + ": " + msg);
    }
  }
}

std::string required_string(const json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end()) throw Error(std::string("missing field \"") + key + "\"");
  if (!it->is_string()) throw Error(std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

std::size_t required_index(const json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end()) throw Error(std::string("missing field \"") + key + "\"");
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw Error(std::string("field \"") + key + "\" must be a non-negative integer");
  }
  return it->get<std::size_t>();
}

std::string strip_punct(std::string_view tok) {
  std::size_t b = 0, e = tok.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(tok[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(tok[e - 1]))) --e;
  return std::string(tok.substr(b, e - b));
}

std::string normalized_key(std::string_view s) {
  std::string out;
  for (const auto& t : normalize_for_match(s)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

void validate_table(const Table& t) {
  if (t.table_id.empty()) throw Error("table with empty table_id");
  if (t.header.empty()) throw Error("table " + t.table_id + ": no columns");
  for (const auto& h : t.header) {
    if (collapse_spaces(h).empty()) throw Error("table " + t.table_id + ": empty header name");
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != t.header.size()) {
      throw Error("table " + t.table_id + ": row " + std::to_string(r) + " has " +
                  std::to_string(t.rows[r].size()) + " cells, expected " +
                  std::to_string(t.header.size()));
    }
  }
}

}  // namespace

Corpus::Corpus(std::vector<Table> tables, std::vector<Passage> passages,
               std::vector<EntityLink> links)
    : tables_(std::move(tables)), passages_(std::move(passages)), links_(std::move(links)) {
  for (std::size_t i = 0; i < tables_.size(); ++i) {
    validate_table(tables_[i]);
    if (!table_by_id_.emplace(tables_[i].table_id, i).second) {
      throw Error("duplicate table_id " + tables_[i].table_id);
    }
  }
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    if (passages_[i].passage_id.empty()) throw Error("passage with empty passage_id");
    if (!passage_by_id_.emplace(passages_[i].passage_id, i).second) {
      throw Error("duplicate passage_id " + passages_[i].passage_id);
    }
  }
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const auto& l = links_[i];
    const Table* t = find_table(l.table_id);
    if (t == nullptr) throw Error("link " + std::to_string(i) + ": unknown table_id " + l.table_id);
    if (l.row_index >= t->rows.size()) {
      throw Error("link " + std::to_string(i) + ": row_index " + std::to_string(l.row_index) +
                  " out of range for table " + l.table_id);
    }
    if (find_passage(l.passage_id) == nullptr) {
      throw Error("link " + std::to_string(i) + ": unknown passage_id " + l.passage_id);
    }
  }
}

const Table* Corpus::find_table(std::string_view id) const {
  auto it = table_by_id_.find(std::string(id));
  return it == table_by_id_.end() ? nullptr : &tables_[it->second];
}

const Passage* Corpus::find_passage(std::string_view id) const {
  auto it = passage_by_id_.find(std::string(id));
  return it == passage_by_id_.end() ? nullptr : &passages_[it->second];
}

std::size_t Corpus::table_index(std::string_view id) const {
  auto it = table_by_id_.find(std::string(id));
  if (it == table_by_id_.end()) throw Error("unknown table_id " + std::string(id));
  return it->second;
}

std::string make_block_id(std::string_view table_id, std::size_t row_index) {
  return std::string(table_id) + "#" + std::to_string(row_index);
}

BlockStore::BlockStore(std::vector<FusedBlock> blocks) : blocks_(std::move(blocks)) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (!by_id_.emplace(blocks_[i].block_id, i).second) {
      throw Error("duplicate block_id " + blocks_[i].block_id);
    }
    by_table_[blocks_[i].table_id].push_back(i);
  }
}

std::size_t BlockStore::ordinal(std::string_view block_id) const {
  auto o = find(block_id);
  if (!o) throw Error("unknown block_id " + std::string(block_id));
  return *o;
}

std::optional<std::size_t> BlockStore::find(std::string_view block_id) const {
  auto it = by_id_.find(std::string(block_id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::size_t>& BlockStore::table_blocks(std::string_view table_id) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = by_table_.find(std::string(table_id));
  return it == by_table_.end() ? kEmpty : it->second;
}

std::string linearize_block(const FusedBlock& block) {
  std::string out;
  append_piece(out, block.title);
  append_piece(out, "[ROW]");
  for (std::size_t c = 0; c < block.header.size(); ++c) {
    append_piece(out, block.header[c]);
    append_piece(out, "is");
    append_piece(out, c < block.row_cells.size() ? block.row_cells[c] : "");
    append_piece(out, ";");
  }
  for (const auto& p : block.passages) {
    append_piece(out, "[PASSAGE]");
    append_piece(out, p.title);
    append_piece(out, ":");
    append_piece(out, p.text);
  }
  return out;
}

BlockStore build_fused_blocks(const Corpus& corpus) {
  // (table, row) -> passage ids in links-file order
  std::map<std::pair<std::string, std::size_t>, std::vector<std::string>> linked;
  for (const auto& l : corpus.links()) {
    auto& ids = linked[{l.table_id, l.row_index}];
    if (std::find(ids.begin(), ids.end(), l.passage_id) == ids.end()) ids.push_back(l.passage_id);
  }

  std::vector<const Table*> order;
  for (const auto& t : corpus.tables()) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const Table* a, const Table* b) { return a->table_id < b->table_id; });

  std::vector<FusedBlock> blocks;
  for (const Table* t : order) {
    for (std::size_t r = 0; r < t->rows.size(); ++r) {
      FusedBlock b;
      b.block_id = make_block_id(t->table_id, r);
      b.table_id = t->table_id;
      b.row_index = r;
      b.title = t->title;
      b.header = t->header;
      b.row_cells = t->rows[r];
      if (auto it = linked.find({t->table_id, r}); it != linked.end()) {
        for (const auto& pid : it->second) b.passages.push_back(*corpus.find_passage(pid));
      }
      b.linearized_text = linearize_block(b);
      blocks.push_back(std::move(b));
    }
  }
  return BlockStore(std::move(blocks));
}

std::vector<std::string> normalize_for_match(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    std::transform(tok.begin(), tok.end(), tok.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::string s = strip_punct(tok);
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

bool answer_match(const std::vector<std::string>& text, const std::vector<std::string>& answer) {
  if (answer.empty()) throw Error("answer_match: empty answer");
  if (answer.size() > text.size()) return false;
  for (std::size_t i = 0; i + answer.size() <= text.size(); ++i) {
    if (std::equal(answer.begin(), answer.end(), text.begin() + static_cast<std::ptrdiff_t>(i))) {
      return true;
    }
  }
  return false;
}

bool answer_match(const FusedBlock& block, std::string_view answer) {
  return answer_match(normalize_for_match(block.linearized_text), normalize_for_match(answer));
}

std::vector<EntityLink> lexical_links(const std::vector<Table>& tables,
                                      const std::vector<Passage>& passages) {
  std::unordered_map<std::string, std::vector<std::string>> by_title;
  for (const auto& p : passages) {
    const std::string key = normalized_key(p.title);
    if (!key.empty()) by_title[key].push_back(p.passage_id);
  }
  std::vector<EntityLink> links;
  for (const auto& t : tables) {
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      for (const auto& cell : t.rows[r]) {
        auto it = by_title.find(normalized_key(cell));
        if (it == by_title.end()) continue;
        for (const auto& pid : it->second) links.push_back({t.table_id, r, pid});
      }
    }
  }
  return links;
}

QAInstance make_instance(std::string question_id, std::string question, std::string answer,
                         std::string table_id, std::optional<std::string> oracle_block_id,
                         const BlockStore& blocks) {
  QAInstance inst;
  inst.question_id = std::move(question_id);
  inst.question = std::move(question);
  inst.answer = std::move(answer);
  inst.table_id = std::move(table_id);
  inst.blocks = blocks.table_blocks(inst.table_id);
  if (inst.blocks.empty()) {
    throw Error("question " + inst.question_id + ": table " + inst.table_id + " has no blocks");
  }
  const auto answer_tokens = normalize_for_match(inst.answer);
  if (answer_tokens.empty()) throw Error("question " + inst.question_id + ": empty answer");
  for (std::size_t o : inst.blocks) {
    if (answer_match(normalize_for_match(blocks[o].linearized_text), answer_tokens)) {
      inst.answer_blocks.push_back(o);
    }
  }
  if (oracle_block_id) {
    const auto o = blocks.find(*oracle_block_id);
    if (!o || blocks[*o].table_id != inst.table_id) {
      throw Error("question " + inst.question_id + ": oracle_block " + *oracle_block_id +
                  " is not a block of table " + inst.table_id);
    }
    inst.oracle_block = *o;
  }
  return inst;
}

std::vector<Table> read_tables(const std::string& path) {
  std::vector<Table> tables;
  std::set<std::string> seen;
  for_each_record(path, [&](const json& rec, std::size_t) {
    Table t;
    t.table_id = required_string(rec, "table_id");
    t.title = rec.value("title", std::string());
    t.header = rec.at("header").get<std::vector<std::string>>();
    t.rows = rec.at("rows").get<std::vector<std::vector<std::string>>>();
    validate_table(t);
    if (!seen.insert(t.table_id).second) throw Error("duplicate table_id " + t.table_id);
    tables.push_back(std::move(t));
  });
  return tables;
}

std::vector<Passage> read_passages(const std::string& path) {
  std::vector<Passage> passages;
  std::set<std::string> seen;
  for_each_record(path, [&](const json& rec, std::size_t) {
    Passage p{required_string(rec, "passage_id"), rec.value("title", std::string()),
              required_string(rec, "text")};
    if (!seen.insert(p.passage_id).second) throw Error("duplicate passage_id " + p.passage_id);
    passages.push_back(std::move(p));
  });
  return passages;
}

std::vector<EntityLink> read_links(const std::string& path) {
  std::vector<EntityLink> links;
  for_each_record(path, [&](const json& rec, std::size_t) {
    links.push_back({required_string(rec, "table_id"), required_index(rec, "row_index"),
                     required_string(rec, "passage_id")});
  });
  return links;
}

Corpus load_corpus(const std::string& tables_path, const std::string& passages_path,
                   const std::string& links_path) {
  auto tables = read_tables(tables_path);
  auto passages = read_passages(passages_path);

  std::unordered_map<std::string, std::size_t> row_counts;
  for (const auto& t : tables) row_counts[t.table_id] = t.rows.size();
  std::set<std::string> passage_ids;
  for (const auto& p : passages) passage_ids.insert(p.passage_id);

  std::vector<EntityLink> links;
  for_each_record(links_path, [&](const json& rec, std::size_t) {
    EntityLink l{required_string(rec, "table_id"), required_index(rec, "row_index"),
                 required_string(rec, "passage_id")};
    auto it = row_counts.find(l.table_id);
    if (it == row_counts.end()) throw Error("dangling link: unknown table_id " + l.table_id);
    if (l.row_index >= it->second) {
      throw Error("dangling link: row_index " + std::to_string(l.row_index) +
                  " out of range for table " + l.table_id);
    }
    if (!passage_ids.count(l.passage_id)) {
      throw Error("dangling link: unknown passage_id " + l.passage_id);
    }
    links.push_back(std::move(l));
  });
  return Corpus(std::move(tables), std::move(passages), std::move(links));
}

std::vector<QAInstance> load_qa(const std::string& path, const BlockStore& blocks) {
  std::vector<QAInstance> out;
  std::set<std::string> seen;
  for_each_record(path, [&](const json& rec, std::size_t) {
    std::optional<std::string> oracle;
    if (auto it = rec.find("oracle_block"); it != rec.end() && !it->is_null()) {
      oracle = it->get<std::string>();
    }
    auto inst = make_instance(required_string(rec, "question_id"), required_string(rec, "q"),
                              required_string(rec, "a"), required_string(rec, "table_id"),
                              std::move(oracle), blocks);
    if (!seen.insert(inst.question_id).second) {
      throw Error("duplicate question_id " + inst.question_id);
    }
    out.push_back(std::move(inst));
  });
  return out;
}

std::string table_record(const Table& t) {
  json j = {{"table_id", t.table_id}, {"title", t.title}, {"header", t.header}, {"rows", t.rows}};
  return j.dump();
}

std::string passage_record(const Passage& p) {
  json j = {{"passage_id", p.passage_id}, {"title", p.title}, {"text", p.text}};
  return j.dump();
}

std::string link_record(const EntityLink& l) {
  json j = {{"table_id", l.table_id}, {"row_index", l.row_index}, {"passage_id", l.passage_id}};
  return j.dump();
}

}  // namespace tabret
