#include "tabret/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "tabret/common.hpp"

namespace tabret::synth {
namespace {

using json = nlohmann::json;

const std::vector<std::string> kSyllables = {
    "ka", "lo", "mer", "vin", "dra", "tol", "sen", "bri", "qua", "zel", "ror", "fen", "dal",
    "mi", "no", "ste", "par", "gul", "hea", "tri", "bo", "cas", "del", "fir", "gan", "hol",
    "jus", "kel", "lun", "mor", "nes", "or", "pel", "quin", "ras", "sol", "tav", "ul", "ver",
    "wen", "yar", "zor", "bel", "cor", "dun", "el", "fa", "gri"};

const std::vector<std::string> kCategories = {
    "guitarist", "sprinter", "painter",  "novelist", "chemist", "cyclist",  "architect",
    "pianist",   "sculptor", "boxer",    "poet",     "drummer", "swimmer",  "director",
    "engineer",  "violinist", "jockey",  "fencer",   "rower",   "botanist"};

const std::vector<std::string> kEvents = {"Championship", "Open",   "Cup",     "Rally",
                                          "Festival",     "Awards", "Series",  "Classic",
                                          "Games",        "Trophy", "Marathon", "Invitational"};

const std::vector<std::string> kEntityHeaders = {"player", "competitor", "entrant", "athlete",
                                                 "artist", "winner"};

enum class ColumnType { year, points, share, prize, height };

const std::vector<ColumnType> kColumnTypes = {ColumnType::year, ColumnType::points,
                                              ColumnType::share, ColumnType::prize,
                                              ColumnType::height};

std::string column_name(ColumnType t) {
  switch (t) {
    case ColumnType::year: return "year";
    case ColumnType::points: return "points";
    case ColumnType::share: return "share";
    case ColumnType::prize: return "prize";
    case ColumnType::height: return "height";
  }
  return "";
}

// Integer code range; values are drawn without replacement from it. The
// ranges are small so that every value token recurs across many tables, and
// each type renders with its own shape so tokens never collide across types.
std::pair<int, int> code_range(ColumnType t) {
  switch (t) {
    case ColumnType::year: return {1981, 2020};
    case ColumnType::points: return {100, 199};
    case ColumnType::share: return {10, 99};
    case ColumnType::prize: return {10, 99};
    case ColumnType::height: return {160, 210};
  }
  return {0, 0};
}

std::string with_thousands(int v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string render(ColumnType t, int code) {
  char buf[32];
  switch (t) {
    case ColumnType::year:
    case ColumnType::points: return std::to_string(code);
    case ColumnType::share:
      std::snprintf(buf, sizeof buf, "%d.%d%%", code / 10, code % 10);
      return buf;
    case ColumnType::prize: return "$" + with_thousands(code * 1000);
    case ColumnType::height:
      std::snprintf(buf, sizeof buf, "%d.%02d", code / 100, code % 100);
      return buf;
  }
  return "";
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

// Distinct pseudo-words of 2-3 syllables.
std::vector<std::string> make_words(Rng& rng, std::size_t n, std::set<std::string>& used) {
  std::vector<std::string> out;
  std::size_t guard = 0;
  while (out.size() < n) {
    if (++guard > n * 1000) throw Error("synth: word pool exhausted");
    const std::size_t len = 2 + rng.below(2);
    std::string w;
    for (std::size_t i = 0; i < len; ++i) w += rng.pick(kSyllables);
    if (used.insert(w).second) out.push_back(capitalize(w));
  }
  return out;
}

template <typename T>
std::vector<T> sample_without_replacement(Rng& rng, std::vector<T> pool, std::size_t n) {
  if (n > pool.size()) throw Error("synth: sample larger than pool");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

struct Entity {
  std::string name;
  std::string category;
  std::string origin;
  std::string passage_id;
};

struct GenTable {
  Table table;
  std::string entity_header;
  std::vector<ColumnType> types;
  std::vector<std::vector<int>> codes;  // [column][row]
  std::vector<std::size_t> entity_of_row;
  std::vector<std::size_t> multiplicity;  // per row
};

struct Candidate {
  Archetype archetype;
  std::size_t table = 0;
  std::size_t row = 0;
  std::string question;
};

std::string numeric_question(Rng& rng, const GenTable& g, std::size_t col, std::size_t row) {
  const std::string& title = g.table.title;
  const std::string name = column_name(g.types[col]);
  const std::string val = g.table.rows[row][col + 1];
  switch (rng.below(3)) {
    case 0: return "In " + title + ", which " + g.entity_header + " has " + name + " " + val + "?";
    case 1: return "Which " + g.entity_header + " in " + title + " had a " + name + " of " + val + "?";
    default: return title + ": who is the " + g.entity_header + " with " + name + " " + val + "?";
  }
}

}  // namespace

void SynthConfig::validate() const {
  const double sum = frac_lookup + frac_ambiguous + frac_superlative;
  if (std::fabs(sum - 1.0) > 1e-9) throw Error("synth: question mix fractions must sum to 1");
  for (double f : {frac_lookup, frac_ambiguous, frac_superlative, superlative_ambiguity, train_frac, dev_frac}) {
    if (!(f >= 0.0 && f <= 1.0)) throw Error("synth: fractions must lie in [0, 1]");
  }
  if (train_frac + dev_frac > 1.0) throw Error("synth: train_frac + dev_frac exceeds 1");
  if (n_tables == 0 || n_questions == 0 || entity_vocab == 0 || n_numeric_columns == 0 ||
      rows_min == 0 || multiplicity_min == 0 || groups_per_table == 0) {
    throw Error("synth: counts must be positive");
  }
  if (rows_min > rows_max) throw Error("synth: rows_min > rows_max");
  if (multiplicity_min < 2 || multiplicity_min > multiplicity_max) {
    throw Error("synth: multiplicity range must satisfy 2 <= min <= max");
  }
  if (multiplicity_max > rows_min) {
    throw Error("synth: infeasible config, ambiguity multiplicity exceeds rows per table");
  }
  if (groups_per_table * multiplicity_max > rows_min) {
    throw Error("synth: infeasible config, planted groups do not fit in the smallest table");
  }
  if (n_numeric_columns > kColumnTypes.size()) {
    throw Error("synth: at most " + std::to_string(kColumnTypes.size()) + " numeric columns");
  }
  if (entity_vocab < rows_max) throw Error("synth: entity vocabulary smaller than a table");
}

std::string archetype_name(Archetype a) {
  switch (a) {
    case Archetype::lookup: return "lookup";
    case Archetype::ambiguous: return "ambiguous";
    case Archetype::superlative: return "superlative";
  }
  return "";
}

Archetype parse_archetype(std::string_view s) {
  if (s == "lookup") return Archetype::lookup;
  if (s == "ambiguous") return Archetype::ambiguous;
  if (s == "superlative") return Archetype::superlative;
  throw Error("unknown archetype '" + std::string(s) + "'");
}

SynthData generate(const SynthConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "synth"));
  std::set<std::string> used;

  // Entities and their passages.
  const std::size_t n_first = std::max<std::size_t>(20, config.entity_vocab / 5);
  const std::size_t n_last = std::max<std::size_t>(40, config.entity_vocab / 2);
  const auto firsts = make_words(rng, n_first, used);
  const auto lasts = make_words(rng, n_last, used);
  const auto origins = make_words(rng, 40, used);
  std::set<std::string> names;
  std::vector<Entity> entities;
  SynthData data;
  while (entities.size() < config.entity_vocab) {
    std::string name = rng.pick(firsts) + " " + rng.pick(lasts);
    if (!names.insert(name).second) continue;
    Entity e{name, rng.pick(kCategories), rng.pick(origins), ""};
    char id[32];
    std::snprintf(id, sizeof id, "p%05zu", entities.size());
    e.passage_id = id;
    data.passages.push_back({e.passage_id, e.name, e.name + " is a " + e.category + " from " + e.origin + "."});
    entities.push_back(std::move(e));
  }

  // Tables.
  const auto title_words = make_words(rng, std::max<std::size_t>(60, config.n_tables), used);
  std::set<std::string> titles;
  std::vector<GenTable> tables;
  std::vector<std::size_t> entity_ids(entities.size());
  for (std::size_t i = 0; i < entity_ids.size(); ++i) entity_ids[i] = i;
  while (tables.size() < config.n_tables) {
    const auto w = sample_without_replacement(rng, title_words, 2);
    std::string title = w[0] + " " + w[1] + " " + rng.pick(kEvents);
    if (!titles.insert(title).second) continue;
    GenTable g;
    char id[32];
    std::snprintf(id, sizeof id, "t%04zu", tables.size());
    g.table.table_id = id;
    g.table.title = title;
    g.entity_header = rng.pick(kEntityHeaders);
    g.types = sample_without_replacement(rng, kColumnTypes, config.n_numeric_columns);
    g.table.header.push_back(g.entity_header);
    for (auto t : g.types) g.table.header.push_back(column_name(t));

    const std::size_t n_rows = static_cast<std::size_t>(
        rng.range(static_cast<std::int64_t>(config.rows_min), static_cast<std::int64_t>(config.rows_max)));
    std::vector<std::size_t> sizes;
    std::size_t planted = 0;
    for (std::size_t k = 0; k < config.groups_per_table; ++k) {
      sizes.push_back(static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(config.multiplicity_min),
                                                         static_cast<std::int64_t>(config.multiplicity_max))));
      planted += sizes.back();
    }
    const std::size_t distinct = config.groups_per_table + (n_rows - planted);
    const auto chosen = sample_without_replacement(rng, entity_ids, distinct);
    std::vector<std::size_t> slots;
    for (std::size_t k = 0; k < sizes.size(); ++k) slots.insert(slots.end(), sizes[k], chosen[k]);
    for (std::size_t k = sizes.size(); k < distinct; ++k) slots.push_back(chosen[k]);
    rng.shuffle(slots);
    g.entity_of_row = slots;
    std::unordered_map<std::size_t, std::size_t> count;
    for (std::size_t e : slots) ++count[e];
    for (std::size_t e : slots) g.multiplicity.push_back(count[e]);

    for (auto t : g.types) {
      const auto [lo, hi] = code_range(t);
      std::vector<int> pool;
      for (int c = lo; c <= hi; ++c) pool.push_back(c);
      g.codes.push_back(sample_without_replacement(rng, pool, n_rows));
    }
    for (std::size_t r = 0; r < n_rows; ++r) {
      std::vector<std::string> row = {entities[slots[r]].name};
      for (std::size_t c = 0; c < g.types.size(); ++c) row.push_back(render(g.types[c], g.codes[c][r]));
      g.table.rows.push_back(std::move(row));
      data.links.push_back({g.table.table_id, r, entities[slots[r]].passage_id});
    }
    tables.push_back(std::move(g));
  }

  // Candidate questions, one per (table, row-or-rank, column) key.
  std::vector<Candidate> lookups, ambiguous, sup_unique, sup_planted;
  for (std::size_t ti = 0; ti < tables.size(); ++ti) {
    const GenTable& g = tables[ti];
    const std::size_t n_rows = g.table.rows.size();
    std::map<std::pair<std::string, std::string>, std::size_t> attr_count;
    for (std::size_t r = 0; r < n_rows; ++r) {
      if (g.multiplicity[r] == 1) {
        const Entity& e = entities[g.entity_of_row[r]];
        ++attr_count[{e.category, e.origin}];
      }
    }
    for (std::size_t r = 0; r < n_rows; ++r) {
      for (std::size_t c = 0; c < g.types.size(); ++c) {
        Candidate cand{g.multiplicity[r] == 1 ? Archetype::lookup : Archetype::ambiguous, ti, r,
                       numeric_question(rng, g, c, r)};
        (g.multiplicity[r] == 1 ? lookups : ambiguous).push_back(std::move(cand));
      }
      if (g.multiplicity[r] == 1) {
        const Entity& e = entities[g.entity_of_row[r]];
        // Attribute lookups need the passage attributes to single out the row
        // among every row of the table, grouped rows included.
        bool unique = attr_count[{e.category, e.origin}] == 1;
        for (std::size_t r2 = 0; r2 < n_rows && unique; ++r2) {
          const Entity& o = entities[g.entity_of_row[r2]];
          if (g.multiplicity[r2] > 1 && o.category == e.category && o.origin == e.origin) unique = false;
        }
        if (unique) {
          lookups.push_back({Archetype::lookup, ti, r,
                             "In " + g.table.title + ", which " + g.entity_header + " is a " +
                                 e.category + " from " + e.origin + "?"});
        }
      }
    }
    for (std::size_t c = 0; c < g.types.size(); ++c) {
      std::vector<std::size_t> order(n_rows);
      for (std::size_t r = 0; r < n_rows; ++r) order[r] = r;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return g.codes[c][a] > g.codes[c][b]; });
      const std::string name = column_name(g.types[c]);
      const std::vector<std::pair<std::string, std::size_t>> dirs = {
          {"highest", order[0]}, {"lowest", order[n_rows - 1]},
          {"second highest", order[1]}, {"second lowest", order[n_rows - 2]}};
      for (const auto& [dir, row] : dirs) {
        std::string q = rng.below(2) == 0
                            ? "In " + g.table.title + ", which " + g.entity_header + " has the " + dir + " " + name + "?"
                            : "Which " + g.entity_header + " had the " + dir + " " + name + " in " + g.table.title + "?";
        Candidate cand{Archetype::superlative, ti, row, std::move(q)};
        (g.multiplicity[row] == 1 ? sup_unique : sup_planted).push_back(std::move(cand));
      }
    }
  }

  const std::size_t n_lookup = static_cast<std::size_t>(std::llround(config.n_questions * config.frac_lookup));
  const std::size_t n_amb = static_cast<std::size_t>(std::llround(config.n_questions * config.frac_ambiguous));
  const std::size_t n_sup = config.n_questions - std::min(config.n_questions, n_lookup + n_amb);
  std::size_t n_sup_planted = static_cast<std::size_t>(std::llround(n_sup * config.superlative_ambiguity));
  n_sup_planted = std::min(n_sup_planted, sup_planted.size());
  const std::size_t n_sup_unique = n_sup - n_sup_planted;
  auto need = [](const std::vector<Candidate>& pool, std::size_t n, const char* what) {
    if (n > pool.size()) {
      throw Error(std::string("synth: infeasible config, only ") + std::to_string(pool.size()) + " " + what +
                  " questions available for " + std::to_string(n) + " requested");
    }
  };
  need(lookups, n_lookup, "lookup");
  need(ambiguous, n_amb, "ambiguous");
  need(sup_unique, n_sup_unique, "superlative");

  std::vector<Candidate> selected;
  for (auto* part : {&lookups, &ambiguous, &sup_unique, &sup_planted}) {
    const std::size_t n = part == &lookups      ? n_lookup
                          : part == &ambiguous  ? n_amb
                          : part == &sup_unique ? n_sup_unique
                                                : n_sup_planted;
    auto pick = sample_without_replacement(rng, *part, n);
    selected.insert(selected.end(), std::make_move_iterator(pick.begin()), std::make_move_iterator(pick.end()));
  }
  rng.shuffle(selected);

  const std::size_t n_train = static_cast<std::size_t>(std::llround(selected.size() * config.train_frac));
  const std::size_t n_dev = static_cast<std::size_t>(std::llround(selected.size() * config.dev_frac));
  std::vector<std::string> table_split(tables.size());
  if (config.split_by_table) {
    std::vector<std::size_t> order(tables.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t t_train = static_cast<std::size_t>(std::llround(tables.size() * config.train_frac));
    const std::size_t t_dev = static_cast<std::size_t>(std::llround(tables.size() * config.dev_frac));
    for (std::size_t i = 0; i < order.size(); ++i) {
      table_split[order[i]] = i < t_train ? "train" : (i < t_train + t_dev ? "dev" : "test");
    }
  }
  std::set<std::string> texts;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const Candidate& c = selected[i];
    if (!texts.insert(c.question).second) throw Error("synth: duplicate question text " + c.question);
    const GenTable& g = tables[c.table];
    SynthQuestion q;
    char id[32];
    std::snprintf(id, sizeof id, "q%05zu", i);
    q.question_id = id;
    q.question = c.question;
    q.answer = entities[g.entity_of_row[c.row]].name;
    q.table_id = g.table.table_id;
    q.oracle_block = make_block_id(g.table.table_id, c.row);
    q.archetype = c.archetype;
    if (config.split_by_table) {
      q.split = table_split[c.table];
    } else {
      q.split = i < n_train ? "train" : (i < n_train + n_dev ? "dev" : "test");
    }
    q.multiplicity = g.multiplicity[c.row];
    if (q.multiplicity == 1) ++data.expected_d1;
    data.questions.push_back(std::move(q));
  }
  for (auto& g : tables) data.tables.push_back(std::move(g.table));
  return data;
}

std::string qa_records(const std::vector<SynthQuestion>& questions) {
  std::string out;
  for (const auto& q : questions) {
    json j = {{"question_id", q.question_id}, {"q", q.question}, {"a", q.answer},
              {"table_id", q.table_id}, {"oracle_block", q.oracle_block}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string manifest_json(const SynthData& data, const SynthConfig& config) {
  json splits = {{"train", json::array()}, {"dev", json::array()}, {"test", json::array()}};
  json tags = json::object();
  for (const auto& q : data.questions) {
    splits[q.split].push_back(q.question_id);
    tags[q.question_id] = archetype_name(q.archetype);
  }
  json j = {{"seed", config.seed},
            {"questions", data.questions.size()},
            {"expected_d1", data.expected_d1},
            {"splits", splits},
            {"archetypes", tags}};
  return j.dump(1) + "\n";
}

void write_synth(const SynthData& data, const SynthConfig& config, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::string tables, passages, links;
  for (const auto& t : data.tables) tables += table_record(t) + "\n";
  for (const auto& p : data.passages) passages += passage_record(p) + "\n";
  for (const auto& l : data.links) links += link_record(l) + "\n";
  write_file_atomic(dir + "/tables.jsonl", tables);
  write_file_atomic(dir + "/passages.jsonl", passages);
  write_file_atomic(dir + "/links.jsonl", links);
  write_file_atomic(dir + "/qa.jsonl", qa_records(data.questions));
  write_file_atomic(dir + "/manifest.json", manifest_json(data, config));
}

SplitManifest read_manifest(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  SplitManifest m;
  try {
    for (const auto& [split, ids] : j.at("splits").items()) m.splits[split] = ids.get<std::vector<std::string>>();
    for (const auto& [qid, tag] : j.at("archetypes").items()) m.archetypes[qid] = tag.get<std::string>();
    m.expected_d1 = j.value("expected_d1", std::size_t{0});
  } catch (const json::exception& e) {
    throw Error(path + ": malformed manifest: " + e.what());
  }
  return m;
}

std::vector<std::vector<double>> numeric_columns(std::size_t n, std::uint64_t seed, std::size_t max_len) {
  if (max_len < 3) throw Error("numeric_columns: max_len must be >= 3");
  Rng rng(derive_seed(seed, "numeric-columns"));
  std::vector<std::vector<double>> cols;
  cols.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = static_cast<std::size_t>(rng.range(3, static_cast<std::int64_t>(max_len)));
    const double scale = std::pow(10.0, rng.uniform(-1.0, 5.0));
    const double offset = rng.uniform() < 0.5 ? 0.0 : scale * rng.uniform(-2.0, 10.0);
    const auto kind = rng.below(4);
    std::vector<double> v(len);
    for (double& x : v) {
      switch (kind) {
        case 0: x = offset + scale * rng.uniform(); break;
        case 1: x = offset + scale * rng.normal(); break;
        case 2: x = offset + scale * -std::log(1.0 - rng.uniform()); break;
        default: x = std::round(offset + scale * rng.uniform()); break;
      }
    }
    cols.push_back(std::move(v));
  }
  return cols;
}

}  // namespace tabret::synth
