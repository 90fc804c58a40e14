#include "tabret/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "json.hpp"
#include "tabret/common.hpp"

namespace tabret {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string or_default(const std::string& explicit_path, const std::string& dir, const char* name) {
  return explicit_path.empty() ? (fs::path(dir) / name).string() : explicit_path;
}

// Reads the keys of one config object, rejecting unknown ones.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw Error("config: '" + name_ + "' must be an object");
  }
  template <typename T>
  Section& get(const char* key, T& field) {
    known_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        field = it->get<T>();
      } catch (const json::exception&) {
        throw Error("config: bad value for '" + name_ + "." + key + "'");
      }
    }
    return *this;
  }
  void done() const {
    for (const auto& [key, v] : j_.items()) {
      if (!known_.count(key)) throw Error("config: unknown key '" + name_ + "." + key + "'");
    }
  }
  const json& at(const char* key) {
    known_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return it == j_.end() ? empty : *it;
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> known_;
};

json config_json(const RunConfig& c) {
  const auto& s = c.synth;
  return {
      {"seed", c.seed},
      {"paths",
       {{"data_dir", c.paths.data_dir}, {"artifacts", c.paths.artifacts}, {"tables", c.paths.tables},
        {"passages", c.paths.passages}, {"links", c.paths.links}, {"qa", c.paths.qa},
        {"split_manifest", c.paths.split_manifest}}},
      {"synth",
       {{"n_tables", s.n_tables}, {"rows_min", s.rows_min}, {"rows_max", s.rows_max},
        {"n_numeric_columns", s.n_numeric_columns}, {"entity_vocab", s.entity_vocab},
        {"n_questions", s.n_questions}, {"frac_lookup", s.frac_lookup},
        {"frac_ambiguous", s.frac_ambiguous}, {"frac_superlative", s.frac_superlative},
        {"multiplicity_min", s.multiplicity_min}, {"multiplicity_max", s.multiplicity_max},
        {"groups_per_table", s.groups_per_table}, {"superlative_ambiguity", s.superlative_ambiguity},
        {"train_frac", s.train_frac}, {"dev_frac", s.dev_frac}, {"split_by_table", s.split_by_table}}},
      {"text", {{"feature_dim", c.feature_dim}}},
      {"bm25", {{"k1", c.bm25.k1}, {"b", c.bm25.b}}},
      {"rate",
       {{"r", c.rate.r}, {"epochs", c.rate.epochs}, {"batch", c.rate.batch},
        {"learning_rate", c.rate.learning_rate}, {"min_columns", c.rate.min_columns}}},
      {"detector",
       {{"epochs", c.detector.epochs}, {"batch", c.detector.batch},
        {"learning_rate", c.detector.learning_rate}, {"feature_dim", c.detector.feature_dim},
        {"min_instances", c.detector.min_instances}}},
      {"retriever",
       {{"d", c.retriever.d}, {"use_rate", c.retriever.use_rate}, {"m_hard", c.retriever.m_hard},
        {"epochs", c.retriever.epochs}, {"batch", c.retriever.batch},
        {"learning_rate", c.retriever.learning_rate}, {"in_batch", c.retriever.in_batch},
        {"normalize", c.retriever.normalize}, {"idf_init", c.retriever.idf_init}}},
      {"eval", {{"ks", c.ks}, {"train_split", c.train_split}, {"eval_split", c.eval_split}}},
  };
}

std::string fingerprint(const std::string& stage, const json& parts) {
  return hex64(hash64(parts.dump(), hash64(stage)));
}

std::string hash_hex(const std::string& path) { return hex64(hash_file(path)); }

}  // namespace

std::string Paths::tables_path() const { return or_default(tables, data_dir, "tables.jsonl"); }
std::string Paths::passages_path() const { return or_default(passages, data_dir, "passages.jsonl"); }
std::string Paths::links_path() const { return or_default(links, data_dir, "links.jsonl"); }
std::string Paths::qa_path() const { return or_default(qa, data_dir, "qa.jsonl"); }
std::string Paths::manifest_path() const { return or_default(split_manifest, data_dir, "manifest.json"); }

void RunConfig::resolve() {
  synth.seed = seed;
  rate.seed = derive_seed(seed, "rate");
  detector.seed = derive_seed(seed, "detector");
  retriever.seed = derive_seed(seed, "retriever");
  retriever.feature_dim = feature_dim;
}

void RunConfig::validate() const {
  synth.validate();
  text::validate_feature_dim(feature_dim);
  text::validate_feature_dim(detector.feature_dim);
  if (!(bm25.k1 >= 0.0) || !(bm25.b >= 0.0 && bm25.b <= 1.0)) throw Error("config: bm25 needs k1 >= 0, 0 <= b <= 1");
  if (rate.r == 0 || rate.epochs == 0 || rate.batch == 0 || !(rate.learning_rate > 0.0)) {
    throw Error("config: rate r, epochs, batch and learning_rate must be positive");
  }
  if (detector.epochs == 0 || detector.batch == 0 || !(detector.learning_rate > 0.0)) {
    throw Error("config: detector epochs, batch and learning_rate must be positive");
  }
  if (retriever.d < 8) throw Error("config: retriever d must be >= 8");
  if (retriever.epochs == 0 || retriever.batch == 0 || retriever.m_hard == 0 ||
      !(retriever.learning_rate > 0.0)) {
    throw Error("config: retriever epochs, batch, m_hard and learning_rate must be positive");
  }
  eval::validate_ks(ks);
  if (paths.artifacts.empty()) throw Error("config: artifacts dir is empty");
}

std::string dump_config(const RunConfig& config) { return config_json(config).dump(2) + "\n"; }

RunConfig parse_config(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(source + ": " + e.what());
  }
  RunConfig c;
  try {
    Section top(j, "config");
    top.get("seed", c.seed);
    Section(top.at("paths"), "paths")
        .get("data_dir", c.paths.data_dir)
        .get("artifacts", c.paths.artifacts)
        .get("tables", c.paths.tables)
        .get("passages", c.paths.passages)
        .get("links", c.paths.links)
        .get("qa", c.paths.qa)
        .get("split_manifest", c.paths.split_manifest)
        .done();
    auto& s = c.synth;
    Section(top.at("synth"), "synth")
        .get("n_tables", s.n_tables)
        .get("rows_min", s.rows_min)
        .get("rows_max", s.rows_max)
        .get("n_numeric_columns", s.n_numeric_columns)
        .get("entity_vocab", s.entity_vocab)
        .get("n_questions", s.n_questions)
        .get("frac_lookup", s.frac_lookup)
        .get("frac_ambiguous", s.frac_ambiguous)
        .get("frac_superlative", s.frac_superlative)
        .get("multiplicity_min", s.multiplicity_min)
        .get("multiplicity_max", s.multiplicity_max)
        .get("groups_per_table", s.groups_per_table)
        .get("superlative_ambiguity", s.superlative_ambiguity)
        .get("train_frac", s.train_frac)
        .get("dev_frac", s.dev_frac)
        .get("split_by_table", s.split_by_table)
        .done();
    Section(top.at("text"), "text").get("feature_dim", c.feature_dim).done();
    Section(top.at("bm25"), "bm25").get("k1", c.bm25.k1).get("b", c.bm25.b).done();
    Section(top.at("rate"), "rate")
        .get("r", c.rate.r)
        .get("epochs", c.rate.epochs)
        .get("batch", c.rate.batch)
        .get("learning_rate", c.rate.learning_rate)
        .get("min_columns", c.rate.min_columns)
        .done();
    Section(top.at("detector"), "detector")
        .get("epochs", c.detector.epochs)
        .get("batch", c.detector.batch)
        .get("learning_rate", c.detector.learning_rate)
        .get("feature_dim", c.detector.feature_dim)
        .get("min_instances", c.detector.min_instances)
        .done();
    Section(top.at("retriever"), "retriever")
        .get("d", c.retriever.d)
        .get("use_rate", c.retriever.use_rate)
        .get("m_hard", c.retriever.m_hard)
        .get("epochs", c.retriever.epochs)
        .get("batch", c.retriever.batch)
        .get("learning_rate", c.retriever.learning_rate)
        .get("in_batch", c.retriever.in_batch)
        .get("normalize", c.retriever.normalize)
        .get("idf_init", c.retriever.idf_init)
        .done();
    Section(top.at("eval"), "eval")
        .get("ks", c.ks)
        .get("train_split", c.train_split)
        .get("eval_split", c.eval_split)
        .done();
    top.done();
  } catch (const Error& e) {
    throw Error(source + ": " + e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path), path); }

RetrieverKind parse_retriever_kind(std::string_view s) {
  if (s == "bm25") return RetrieverKind::bm25;
  if (s == "dense") return RetrieverKind::dense;
  throw Error("unknown retriever '" + std::string(s) + "' (expected bm25 or dense)");
}

const eval::EvalReport& AblationResult::report(std::string_view arm, std::string_view subset) const {
  const std::string name = std::string(arm) + "/" + std::string(subset);
  for (const auto& reps : reports) {
    for (const auto& r : reps) {
      if (r.name == name) return r;
    }
  }
  throw Error("no ablation report " + name);
}

// ---------------------------------------------------------------------------

struct Pipeline::State {
  std::optional<Corpus> corpus;
  std::optional<BlockStore> blocks;
  std::optional<std::vector<QAInstance>> instances;
  std::optional<synth::SplitManifest> manifest;
  bool manifest_checked = false;
};

Pipeline::Pipeline(RunConfig config, bool force, std::ostream* log)
    : config_(std::move(config)), force_(force), log_(log), state_(std::make_unique<State>()) {
  config_.resolve();
  config_.validate();
}

Pipeline::~Pipeline() = default;

std::string Pipeline::artifact(const std::string& name) const {
  return (fs::path(config_.paths.artifacts) / name).string();
}

void Pipeline::require(const Input& in) const {
  if (!fs::exists(in.path)) {
    throw Error("missing " + in.path + " (produced by stage '" + in.producer + "'; run `tabret " +
                in.producer + "` first)");
  }
}

template <typename Body>
void Pipeline::run_stage(const std::string& stage, const std::string& fp, const std::vector<Input>& inputs,
                         const std::vector<std::string>& outputs, Body&& body) {
  for (const auto& in : inputs) require(in);
  json input_hashes = json::object();
  for (const auto& in : inputs) input_hashes[in.path] = hash_hex(in.path);

  const std::string manifest_path = artifact("manifest.json");
  json manifest = json::object();
  if (fs::exists(manifest_path)) {
    try {
      manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
      throw Error(manifest_path + ": " + e.what());
    }
  }
  if (!force_ && manifest.contains(stage)) {
    const json& rec = manifest[stage];
    bool fresh = rec.value("fingerprint", "") == fp && rec.value("inputs", json::object()) == input_hashes;
    const json recorded = rec.value("outputs", json::object());
    for (const auto& out : outputs) {
      fresh = fresh && fs::exists(out) && recorded.contains(out) && recorded[out] == hash_hex(out);
    }
    if (fresh) {
      if (log_) *log_ << stage << ": up to date\n";
      return;
    }
  }
  body();
  json output_hashes = json::object();
  for (const auto& out : outputs) {
    if (!fs::exists(out)) throw Error("stage " + stage + " did not produce " + out);
    output_hashes[out] = hash_hex(out);
  }
  // Re-read: the body may have run nested stages that updated the manifest.
  if (fs::exists(manifest_path)) manifest = json::parse(read_file(manifest_path));
  manifest[stage] = {{"fingerprint", fp}, {"inputs", input_hashes}, {"outputs", output_hashes}};
  write_file_atomic(manifest_path, manifest.dump(1) + "\n");
}

// --- loaded state --------------------------------------------------------------

const BlockStore& Pipeline::blocks() {
  if (!state_->blocks) {
    const auto& p = config_.paths;
    for (const auto& path : {p.tables_path(), p.passages_path(), p.links_path()}) require({path, "synth"});
    state_->corpus = load_corpus(p.tables_path(), p.passages_path(), p.links_path());
    state_->blocks = build_fused_blocks(*state_->corpus);
  }
  return *state_->blocks;
}

const std::vector<QAInstance>& Pipeline::instances() {
  if (!state_->instances) {
    require({config_.paths.qa_path(), "synth"});
    state_->instances = load_qa(config_.paths.qa_path(), blocks());
  }
  return *state_->instances;
}

std::vector<QAInstance> Pipeline::split(const std::string& name) {
  if (!state_->manifest_checked) {
    state_->manifest_checked = true;
    if (fs::exists(config_.paths.manifest_path())) {
      state_->manifest = synth::read_manifest(config_.paths.manifest_path());
    } else if (log_) {
      *log_ << "no split manifest at " << config_.paths.manifest_path()
            << "; every question is used for both training and evaluation\n";
    }
  }
  const auto& all = instances();
  if (!state_->manifest) return all;
  auto it = state_->manifest->splits.find(name);
  if (it == state_->manifest->splits.end()) throw Error("split manifest has no split '" + name + "'");
  std::set<std::string> ids(it->second.begin(), it->second.end());
  std::vector<QAInstance> out;
  for (const auto& inst : all) {
    if (ids.count(inst.question_id)) out.push_back(inst);
  }
  return out;
}

std::optional<std::string> Pipeline::archetype(const std::string& question_id) {
  split(config_.train_split);  // loads the manifest
  if (!state_->manifest) return std::nullopt;
  auto it = state_->manifest->archetypes.find(question_id);
  if (it == state_->manifest->archetypes.end()) return std::nullopt;
  return it->second;
}

// --- stages -------------------------------------------------------------------

void Pipeline::synth() {
  const auto& p = config_.paths;
  const std::vector<std::string> outputs = {(fs::path(p.data_dir) / "tables.jsonl").string(),
                                            (fs::path(p.data_dir) / "passages.jsonl").string(),
                                            (fs::path(p.data_dir) / "links.jsonl").string(),
                                            (fs::path(p.data_dir) / "qa.jsonl").string(),
                                            (fs::path(p.data_dir) / "manifest.json").string()};
  const json parts = {{"seed", config_.seed}, {"synth", config_json(config_)["synth"]}};
  run_stage("synth", fingerprint("synth", parts), {}, outputs, [&] {
    const auto data = synth::generate(config_.synth);
    synth::write_synth(data, config_.synth, p.data_dir);
    if (log_) {
      *log_ << "synth: " << data.tables.size() << " tables, " << data.passages.size() << " passages, "
            << data.questions.size() << " questions -> " << p.data_dir << "\n";
    }
  });
  state_ = std::make_unique<State>();
}

void Pipeline::ingest() {
  const auto& p = config_.paths;
  const std::vector<Input> inputs = {{p.tables_path(), "synth"}, {p.passages_path(), "synth"},
                                     {p.links_path(), "synth"}, {p.qa_path(), "synth"}};
  state_ = std::make_unique<State>();
  run_stage("ingest", fingerprint("ingest", json::object()), inputs, {artifact("blocks.jsonl")}, [&] {
    const auto& bs = blocks();
    const auto& qa = instances();
    std::string out;
    for (const auto& b : bs.blocks()) {
      out += json{{"block_id", b.block_id}, {"table_id", b.table_id}, {"row_index", b.row_index},
                  {"text", b.linearized_text}}
                 .dump();
      out += '\n';
    }
    write_file_atomic(artifact("blocks.jsonl"), out);
    const auto part = denoise::partition_dataset(qa);
    if (log_) {
      *log_ << "ingest: " << state_->corpus->tables().size() << " tables, " << bs.size() << " blocks, "
            << qa.size() << " questions (D1 " << part.d1.size() << ", D2+ " << part.d2plus.size()
            << ", D0 " << part.d0.size() << ")\n";
    }
  });
}

void Pipeline::index_sparse() {
  const json parts = {{"k1", config_.bm25.k1}, {"b", config_.bm25.b}};
  run_stage("index-sparse", fingerprint("index-sparse", parts), {{artifact("blocks.jsonl"), "ingest"}},
            {artifact("bm25.idx")}, [&] {
              const auto index = Bm25Index::build(blocks(), config_.bm25);
              index.save(artifact("bm25.idx"));
              if (log_) *log_ << "index-sparse: " << blocks().size() << " blocks indexed\n";
            });
}

void Pipeline::train_rate() {
  const json parts = {{"rate", config_json(config_)["rate"]}, {"seed", config_.rate.seed}};
  run_stage("train-rate", fingerprint("train-rate", parts), {{artifact("blocks.jsonl"), "ingest"}},
            {artifact("rate.bin")}, [&] {
              blocks();
              std::vector<rate::NumericColumn> columns;
              for (const auto& t : state_->corpus->tables()) {
                for (auto& c : rate::extract_numeric_columns(t)) columns.push_back(std::move(c));
              }
              rate::RankTrainReport rep;
              const auto enc = rate::train_rank_encoder(columns, config_.rate, &rep);
              enc.save(artifact("rate.bin"));
              if (log_) {
                std::vector<std::vector<double>> values;
                for (const auto& c : columns) {
                  std::vector<double> v;
                  for (const auto& nv : c.values) v.push_back(nv.value);
                  values.push_back(std::move(v));
                }
                const auto acc = rate::evaluate_heads(enc, values);
                *log_ << "train-rate: " << rep.columns_used << " columns (" << rep.columns_skipped_ties
                      << " skipped for ties), final loss " << rep.epoch_loss.back() << ", max/min head accuracy "
                      << acc.max_accuracy << "/" << acc.min_accuracy << "\n";
              }
            });
}

void Pipeline::train_detector() {
  const auto& p = config_.paths;
  std::vector<Input> inputs = {{artifact("blocks.jsonl"), "ingest"}, {artifact("bm25.idx"), "index-sparse"},
                               {p.qa_path(), "synth"}};
  if (fs::exists(p.manifest_path())) inputs.push_back({p.manifest_path(), "synth"});
  const json parts = {{"detector", config_json(config_)["detector"]}, {"seed", config_.detector.seed},
                      {"split", config_.train_split}};
  run_stage("train-detector", fingerprint("train-detector", parts), inputs, {artifact("detector.bin")}, [&] {
    const auto bm25 = Bm25Index::load(artifact("bm25.idx"));
    const auto part = denoise::partition_dataset(split(config_.train_split));
    denoise::DetectorTrainReport rep;
    const auto det = denoise::train_detector(part.d1, blocks(), bm25, config_.detector, &rep);
    det.save(artifact("detector.bin"));
    if (log_) {
      *log_ << "train-detector: " << rep.instances_used << " D1 instances (" << rep.skipped_no_negative
            << " without a negative), loss " << rep.initial_loss << " -> " << rep.final_loss << "\n";
    }
  });
}

void Pipeline::denoise() {
  const auto& p = config_.paths;
  std::vector<Input> inputs = {{artifact("detector.bin"), "train-detector"},
                               {artifact("blocks.jsonl"), "ingest"},
                               {p.qa_path(), "synth"}};
  if (fs::exists(p.manifest_path())) inputs.push_back({p.manifest_path(), "synth"});
  const json parts = {{"split", config_.train_split}};
  run_stage("denoise", fingerprint("denoise", parts), inputs, {artifact("denoised.jsonl")}, [&] {
    const auto det = denoise::Detector::load(artifact("detector.bin"));
    const auto data = denoise::denoise_dataset(denoise::partition_dataset(split(config_.train_split)), det, blocks());
    write_file_atomic(artifact("denoised.jsonl"), denoise::denoised_records(data, blocks()));
    if (log_) {
      const auto agree = denoise::oracle_agreement(data.instances);
      *log_ << "denoise: " << data.instances.size() << " instances kept, " << data.dropped_d0
            << " without an answer block dropped";
      if (agree.evaluated) {
        *log_ << "; oracle agreement on D2+ " << agree.accuracy() << " over " << agree.evaluated
              << " (random pick " << agree.random_pick << ")";
      }
      *log_ << "\n";
    }
  });
}

void Pipeline::train_retriever() {
  const bool use_rate = config_.retriever.use_rate;
  std::vector<Input> inputs = {{artifact("denoised.jsonl"), "denoise"},
                               {artifact("bm25.idx"), "index-sparse"},
                               {artifact("blocks.jsonl"), "ingest"}};
  if (use_rate) inputs.push_back({artifact("rate.bin"), "train-rate"});
  const json parts = {{"retriever", config_json(config_)["retriever"]}, {"seed", config_.retriever.seed},
                      {"feature_dim", config_.feature_dim}};
  run_stage("train-retriever", fingerprint("train-retriever", parts), inputs, {artifact("retriever.bin")}, [&] {
    const auto bm25 = Bm25Index::load(artifact("bm25.idx"));
    std::optional<rate::RankEncoder> enc;
    if (use_rate) enc = rate::RankEncoder::load(artifact("rate.bin"));
    const auto data = denoise::read_denoised(artifact("denoised.jsonl"), split(config_.train_split), blocks());
    retriever::RetrieverTrainReport rep;
    const auto model = retriever::train_retriever(retriever::pairs_from_denoised(data), blocks(), bm25,
                                                  enc ? &*enc : nullptr, config_.retriever, &rep);
    model.save(artifact("retriever.bin"));
    if (log_) {
      *log_ << "train-retriever: " << rep.pairs_used << " pairs (" << rep.skipped_no_negative
            << " skipped without a negative), loss " << rep.epoch_loss.front() << " -> "
            << rep.epoch_loss.back() << "\n";
    }
  });
}

void Pipeline::index_dense() {
  std::vector<Input> inputs = {{artifact("retriever.bin"), "train-retriever"}, {artifact("blocks.jsonl"), "ingest"}};
  if (config_.retriever.use_rate) inputs.push_back({artifact("rate.bin"), "train-rate"});
  run_stage("index-dense", fingerprint("index-dense", json::object()), inputs, {artifact("dense.idx")}, [&] {
    const auto model = retriever::DualEncoder::load(artifact("retriever.bin"));
    std::optional<rate::RankEncoder> enc;
    if (model.shape().r > 0) enc = rate::RankEncoder::load(artifact("rate.bin"));
    const auto index = retriever::DenseIndex::build(model, blocks(), enc ? &*enc : nullptr);
    index.save(artifact("dense.idx"));
    if (log_) *log_ << "index-dense: " << index.size() << " blocks, d = " << index.dim() << "\n";
  });
}

void Pipeline::build_all() {
  ingest();
  index_sparse();
  train_rate();
  train_detector();
  denoise();
  train_retriever();
  index_dense();
}

// --- retrieval and evaluation -----------------------------------------------------

namespace {

void check_index(const retriever::DenseIndex& index, const BlockStore& blocks, const std::string& path) {
  if (index.size() != blocks.size()) throw Error(path + " does not match the corpus; re-run index-dense");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (index.ids()[i] != blocks[i].block_id) throw Error(path + " does not match the corpus; re-run index-dense");
  }
}

}  // namespace

std::vector<RetrievalResult> Pipeline::dense_results(const retriever::DualEncoder& model,
                                                     const retriever::DenseIndex& index,
                                                     const std::vector<QAInstance>& questions, std::size_t k) {
  std::vector<RetrievalResult> out;
  out.reserve(questions.size());
  for (const auto& q : questions) {
    out.push_back({q.question_id, index.topk(model.encode_question(q.question), k)});
  }
  return out;
}

std::vector<RetrievalResult> Pipeline::retrieve(RetrieverKind kind, const std::vector<Query>& queries,
                                                std::size_t k) {
  if (k < 1) throw Error("retrieve: k must be >= 1");
  std::vector<RetrievalResult> out;
  if (kind == RetrieverKind::bm25) {
    require({artifact("bm25.idx"), "index-sparse"});
    const auto bm25 = Bm25Index::load(artifact("bm25.idx"));
    for (const auto& q : queries) out.push_back({q.id, bm25.topk(q.text, k)});
    return out;
  }
  require({artifact("retriever.bin"), "train-retriever"});
  require({artifact("dense.idx"), "index-dense"});
  const auto model = retriever::DualEncoder::load(artifact("retriever.bin"));
  const auto index = retriever::DenseIndex::load(artifact("dense.idx"));
  check_index(index, blocks(), artifact("dense.idx"));
  for (const auto& q : queries) out.push_back({q.id, index.topk(model.encode_question(q.text), k)});
  return out;
}

std::vector<eval::EvalReport> Pipeline::evaluate_results(const std::string& name,
                                                         const std::vector<RetrievalResult>& results,
                                                         const std::string& fp) {
  const auto questions = split(config_.eval_split);
  std::vector<eval::EvalReport> reps;
  reps.push_back(eval::evaluate(name + "/all", results, eval::gold_from_instances(questions), blocks(),
                                config_.ks, fp));
  std::map<std::string, std::vector<QAInstance>> by_tag;
  for (const auto& q : questions) {
    if (auto tag = archetype(q.question_id)) by_tag[*tag].push_back(q);
  }
  for (const auto& [tag, subset] : by_tag) {
    std::set<std::string> ids;
    for (const auto& q : subset) ids.insert(q.question_id);
    std::vector<RetrievalResult> sub;
    for (const auto& r : results) {
      if (ids.count(r.question_id)) sub.push_back(r);
    }
    reps.push_back(eval::evaluate(name + "/" + tag, sub, eval::gold_from_instances(subset), blocks(), config_.ks, fp));
  }
  return reps;
}

std::vector<eval::EvalReport> Pipeline::evaluate(RetrieverKind kind) {
  const auto questions = split(config_.eval_split);
  std::vector<Query> queries;
  for (const auto& q : questions) queries.push_back({q.question_id, q.question});
  const std::size_t depth = config_.ks.back();
  const auto results = retrieve(kind, queries, depth);
  const std::string name = kind == RetrieverKind::bm25 ? "bm25" : "dense";
  const std::string model_file = artifact(kind == RetrieverKind::bm25 ? "bm25.idx" : "retriever.bin");
  const auto reps = evaluate_results(name, results, hash_hex(model_file));
  write_file_atomic(artifact("eval-" + name + ".jsonl"), eval::report_records(reps));
  write_file_atomic(artifact("eval-" + name + ".txt"), eval::report_table(reps));
  if (log_) *log_ << eval::report_table(reps);
  return reps;
}

AblationResult Pipeline::ablate() {
  ingest();
  index_sparse();
  train_rate();
  train_detector();
  denoise();

  struct Arm {
    std::string name;
    bool denoised;
    bool use_rate;
  };
  const std::vector<Arm> arms = {{"full", true, true}, {"no-denoise", false, true}, {"no-rate", true, false}};
  AblationResult result;
  std::vector<eval::EvalReport> summary;
  for (const auto& arm : arms) {
    const std::string dir = (fs::path("ablation") / arm.name).string();
    const std::string model_path = artifact(dir + "/retriever.bin");
    const std::string index_path = artifact(dir + "/dense.idx");
    retriever::RetrieverConfig rc = config_.retriever;
    rc.use_rate = arm.use_rate;
    std::vector<Input> inputs = {{artifact("bm25.idx"), "index-sparse"}, {artifact("blocks.jsonl"), "ingest"},
                                 {config_.paths.qa_path(), "synth"}};
    if (arm.denoised) inputs.push_back({artifact("denoised.jsonl"), "denoise"});
    if (arm.use_rate) inputs.push_back({artifact("rate.bin"), "train-rate"});
    if (fs::exists(config_.paths.manifest_path())) inputs.push_back({config_.paths.manifest_path(), "synth"});
    json rcj = config_json(config_)["retriever"];
    rcj["use_rate"] = arm.use_rate;
    const json parts = {{"retriever", rcj}, {"seed", rc.seed}, {"denoised", arm.denoised},
                        {"feature_dim", config_.feature_dim}, {"split", config_.train_split}};
    std::optional<rate::RankEncoder> enc;
    if (arm.use_rate) enc = rate::RankEncoder::load(artifact("rate.bin"));
    run_stage("ablate/" + arm.name, fingerprint("ablate", parts), inputs, {model_path, index_path}, [&] {
      const auto bm25 = Bm25Index::load(artifact("bm25.idx"));
      const auto train = split(config_.train_split);
      const auto pairs = arm.denoised
                             ? retriever::pairs_from_denoised(
                                   denoise::read_denoised(artifact("denoised.jsonl"), train, blocks()))
                             : retriever::pairs_from_all_answers(train);
      retriever::RetrieverTrainReport rep;
      const auto model =
          retriever::train_retriever(pairs, blocks(), bm25, enc ? &*enc : nullptr, rc, &rep);
      model.save(model_path);
      retriever::DenseIndex::build(model, blocks(), enc ? &*enc : nullptr).save(index_path);
      if (log_) {
        *log_ << "ablate/" << arm.name << ": " << rep.pairs_used << " pairs, loss " << rep.epoch_loss.front()
              << " -> " << rep.epoch_loss.back() << "\n";
      }
    });
    const auto model = retriever::DualEncoder::load(model_path);
    const auto index = retriever::DenseIndex::load(index_path);
    check_index(index, blocks(), index_path);
    const auto results = dense_results(model, index, split(config_.eval_split), config_.ks.back());
    auto reps = evaluate_results(arm.name, results, hash_hex(model_path));
    write_file_atomic(artifact(dir + "/report.jsonl"), eval::report_records(reps));
    write_file_atomic(artifact(dir + "/report.txt"), eval::report_table(reps));
    summary.insert(summary.end(), reps.begin(), reps.end());
    result.arms.push_back(arm.name);
    result.reports.push_back(std::move(reps));
  }
  write_file_atomic(artifact("ablation/summary.jsonl"), eval::report_records(summary));
  write_file_atomic(artifact("ablation/summary.txt"), eval::report_table(summary));
  if (log_) *log_ << eval::report_table(summary);
  return result;
}

}  // namespace tabret
