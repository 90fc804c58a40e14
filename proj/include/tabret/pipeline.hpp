#pragma once

// Run configuration and the staged pipeline behind the command line:
// synth, ingest, index-sparse, train-rate, train-detector, denoise,
// train-retriever, index-dense, retrieve, eval and ablate. Every stage records
// its config fingerprint and input/output hashes in <artifacts>/manifest.json
// and is skipped when nothing changed.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tabret/bm25.hpp"
#include "tabret/corpus.hpp"
#include "tabret/denoise.hpp"
#include "tabret/eval.hpp"
#include "tabret/rate.hpp"
#include "tabret/retriever.hpp"
#include "tabret/synth.hpp"

namespace tabret {

struct Paths {
  std::string data_dir = "data";
  std::string artifacts = "artifacts";
  // Empty means <data_dir>/<default file name>.
  std::string tables, passages, links, qa, split_manifest;

  std::string tables_path() const;
  std::string passages_path() const;
  std::string links_path() const;
  std::string qa_path() const;
  std::string manifest_path() const;
};

struct RunConfig {
  std::uint64_t seed = 2024;
  Paths paths;
  synth::SynthConfig synth;
  std::uint32_t feature_dim = text::kDefaultFeatureDim;
  Bm25Params bm25;
  rate::RankTrainConfig rate;
  denoise::DetectorConfig detector;
  retriever::RetrieverConfig retriever;
  std::vector<std::size_t> ks = eval::kDefaultKs;
  std::string train_split = "train";
  std::string eval_split = "test";

  // Pushes the global seed and feature dimension into the module configs.
  void resolve();
  void validate() const;
};

// JSON object; missing keys keep their defaults, unknown keys are errors.
std::string dump_config(const RunConfig& config);
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

enum class RetrieverKind { bm25, dense };
RetrieverKind parse_retriever_kind(std::string_view s);

struct Query {
  std::string id;
  std::string text;
};

struct AblationResult {
  // Arms in order: full, no-denoise, no-rate. Each holds reports for the eval
  // split and its archetype subsets.
  std::vector<std::string> arms;
  std::vector<std::vector<eval::EvalReport>> reports;

  const eval::EvalReport& report(std::string_view arm, std::string_view subset) const;
};

class Pipeline {
 public:
  explicit Pipeline(RunConfig config, bool force = false, std::ostream* log = nullptr);
  ~Pipeline();

  const RunConfig& config() const { return config_; }
  std::string artifact(const std::string& name) const;

  void synth();
  void ingest();
  void index_sparse();
  void train_rate();
  void train_detector();
  void denoise();
  void train_retriever();
  void index_dense();
  // ingest through index-dense.
  void build_all();

  std::vector<RetrievalResult> retrieve(RetrieverKind kind, const std::vector<Query>& queries,
                                        std::size_t k);
  // Evaluates the eval split (and its archetype subsets when tagged); writes
  // eval-<kind>.jsonl and eval-<kind>.txt.
  std::vector<eval::EvalReport> evaluate(RetrieverKind kind);
  // Trains and evaluates the full, no-denoise and no-rate arms from the same
  // seeds and data under <artifacts>/ablation/<arm>/.
  AblationResult ablate();

  // Loaded state, for inspection.
  const BlockStore& blocks();
  const std::vector<QAInstance>& instances();
  std::vector<QAInstance> split(const std::string& name);
  std::optional<std::string> archetype(const std::string& question_id);

 private:
  struct State;
  struct Input {
    std::string path;
    std::string producer;  // stage that writes it
  };

  template <typename Body>
  void run_stage(const std::string& stage, const std::string& fingerprint,
                 const std::vector<Input>& inputs, const std::vector<std::string>& outputs, Body&& body);
  void require(const Input& in) const;
  std::vector<eval::EvalReport> evaluate_results(const std::string& name,
                                                 const std::vector<RetrievalResult>& results,
                                                 const std::string& fingerprint);
  std::vector<RetrievalResult> dense_results(const retriever::DualEncoder& model,
                                             const retriever::DenseIndex& index,
                                             const std::vector<QAInstance>& questions, std::size_t k);

  RunConfig config_;
  bool force_;
  std::ostream* log_;
  std::unique_ptr<State> state_;
};

}  // namespace tabret
