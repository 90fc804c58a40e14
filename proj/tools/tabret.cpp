// tabret: command line front end for the retrieval pipeline.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tabret/common.hpp"
#include "tabret/pipeline.hpp"

namespace {

using tabret::Pipeline;
using tabret::RunConfig;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> artifacts, data_dir;
  bool force = false;

  std::optional<std::size_t> n_tables, n_questions;
  std::optional<std::size_t> rate_r, rate_epochs;
  std::optional<std::size_t> det_epochs;
  std::optional<double> det_lr;
  std::optional<std::size_t> d, ret_epochs, batch, m_hard;
  std::optional<double> ret_lr;
  bool no_rate = false, no_in_batch = false, normalize = false;

  std::string retriever = "dense";
  std::size_t k = 20;
  std::vector<std::string> queries;
  std::string questions_file;
};

template <typename T, typename U>
void apply(const std::optional<T>& v, U& field) {
  if (v) field = *v;
}

RunConfig effective_config(const Overrides& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : tabret::load_config(o.config_path);
  apply(o.seed, c.seed);
  apply(o.artifacts, c.paths.artifacts);
  apply(o.data_dir, c.paths.data_dir);
  apply(o.n_tables, c.synth.n_tables);
  apply(o.n_questions, c.synth.n_questions);
  apply(o.rate_r, c.rate.r);
  apply(o.rate_epochs, c.rate.epochs);
  apply(o.det_epochs, c.detector.epochs);
  apply(o.det_lr, c.detector.learning_rate);
  apply(o.d, c.retriever.d);
  apply(o.ret_epochs, c.retriever.epochs);
  apply(o.batch, c.retriever.batch);
  apply(o.m_hard, c.retriever.m_hard);
  apply(o.ret_lr, c.retriever.learning_rate);
  if (o.no_rate) c.retriever.use_rate = false;
  if (o.no_in_batch) c.retriever.in_batch = false;
  if (o.normalize) c.retriever.normalize = true;
  return c;
}

std::vector<tabret::Query> read_queries(const Overrides& o, Pipeline& p) {
  std::vector<tabret::Query> out;
  for (std::size_t i = 0; i < o.queries.size(); ++i) out.push_back({"query-" + std::to_string(i), o.queries[i]});
  if (!o.questions_file.empty()) {
    for (const auto& inst : tabret::load_qa(o.questions_file, p.blocks())) out.push_back({inst.question_id, inst.question});
  }
  if (out.empty()) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(std::cin, line)) {
      if (!line.empty()) out.push_back({"stdin-" + std::to_string(n++), line});
    }
  }
  return out;
}

int run(const std::string& command, const Overrides& o) {
  RunConfig config = effective_config(o);
  if (command == "show-config") {
    config.resolve();
    std::cout << tabret::dump_config(config);
    return 0;
  }
  Pipeline p(config, o.force, &std::cerr);
  if (command == "synth") p.synth();
  else if (command == "ingest") p.ingest();
  else if (command == "index-sparse") p.index_sparse();
  else if (command == "train-rate") p.train_rate();
  else if (command == "train-detector") p.train_detector();
  else if (command == "denoise") p.denoise();
  else if (command == "train-retriever") p.train_retriever();
  else if (command == "index-dense") p.index_dense();
  else if (command == "run") {
    p.synth();
    p.build_all();
  } else if (command == "eval") {
    p.evaluate(tabret::parse_retriever_kind(o.retriever));
  } else if (command == "ablate") {
    p.ablate();
  } else if (command == "retrieve") {
    const auto kind = tabret::parse_retriever_kind(o.retriever);
    const auto queries = read_queries(o, p);
    const auto results = p.retrieve(kind, queries, o.k);
    for (std::size_t i = 0; i < results.size(); ++i) {
      nlohmann::json hits = nlohmann::json::array();
      for (const auto& h : results[i].hits) {
        hits.push_back({{"block_id", p.blocks()[h.ordinal].block_id}, {"score", h.score}});
      }
      std::cout << nlohmann::json{{"question_id", results[i].question_id}, {"q", queries[i].text}, {"hits", hits}}.dump()
                << "\n";
    }
  } else {
    throw tabret::Error("unknown subcommand " + command);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabret: table-text retrieval with dataset denoising and rank-aware table encoding"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config_path, "JSON run config (missing keys keep defaults)")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "global seed (default 2024)");
  app.add_option("--artifacts", o.artifacts, "artifacts directory (default artifacts)");
  app.add_option("--data-dir", o.data_dir, "corpus directory (default data)");
  app.add_flag("--force", o.force, "re-run stages even when the manifest says they are up to date");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus, questions and split manifest");
  synth->add_option("--n-tables", o.n_tables, "number of tables (default 300)");
  synth->add_option("--n-questions", o.n_questions, "number of questions (default 5000)");
  app.add_subcommand("ingest", "validate the corpus and build fused blocks");
  app.add_subcommand("index-sparse", "build the BM25 index");
  auto* rate = app.add_subcommand("train-rate", "train the rank-aware column encoder");
  rate->add_option("--r", o.rate_r, "rank embedding dimension (default 16)");
  rate->add_option("--epochs", o.rate_epochs, "training epochs");
  auto* det = app.add_subcommand("train-detector", "train the false-positive detector on D1");
  det->add_option("--epochs", o.det_epochs, "training epochs (default 10)");
  det->add_option("--lr", o.det_lr, "learning rate (default 0.05)");
  app.add_subcommand("denoise", "pick one positive block per ambiguous training question");
  auto* ret = app.add_subcommand("train-retriever", "train the dual encoder");
  for (auto* sc : {ret, app.add_subcommand("ablate", "train and evaluate full, no-denoise and no-rate arms"),
                   app.add_subcommand("run", "synth then every stage through index-dense")}) {
    sc->add_option("--d", o.d, "embedding dimension (default 256)");
    sc->add_option("--epochs", o.ret_epochs, "training epochs (default 12)");
    sc->add_option("--batch", o.batch, "batch size (default 64)");
    sc->add_option("--m-hard", o.m_hard, "BM25 hard negatives per question (default 2)");
    sc->add_option("--lr", o.ret_lr, "learning rate (default 2e-3)");
    sc->add_flag("--no-rate", o.no_rate, "disable rank features");
    sc->add_flag("--no-in-batch", o.no_in_batch, "disable in-batch negatives");
    sc->add_flag("--normalize", o.normalize, "L2-normalize encodings");
  }
  app.add_subcommand("index-dense", "encode every block into the dense index");
  auto* retrieve = app.add_subcommand("retrieve", "top-k blocks for queries (--query, --questions, or stdin lines)");
  retrieve->add_option("--retriever", o.retriever, "bm25 or dense (default dense)");
  retrieve->add_option("--k", o.k, "results per query (default 20)");
  retrieve->add_option("--query", o.queries, "query text (repeatable)");
  retrieve->add_option("--questions", o.questions_file, "QA record file to run")->check(CLI::ExistingFile);
  auto* ev = app.add_subcommand("eval", "block and table recall on the eval split");
  ev->add_option("--retriever", o.retriever, "bm25 or dense (default dense)");
  app.add_subcommand("show-config", "print the effective configuration as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return run(app.get_subcommands().front()->get_name(), o);
  } catch (const std::exception& e) {
    std::cerr << "tabret: error: " << e.what() << "\n";
    return 1;
  }
}
