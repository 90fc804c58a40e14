// Python module tabret._core: the indexes, the rank encoder, the loss
// functions, synthetic data and the staged pipeline.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tabret/bm25.hpp"
#include "tabret/denoise.hpp"
#include "tabret/pipeline.hpp"
#include "tabret/rate.hpp"
#include "tabret/retriever.hpp"
#include "tabret/synth.hpp"
#include "tabret/text.hpp"

namespace py = pybind11;
using namespace tabret;

namespace {

using Hits = std::vector<std::pair<std::size_t, double>>;

Hits as_pairs(const std::vector<ScoredBlock>& hits) {
  Hits out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.emplace_back(h.ordinal, h.score);
  return out;
}

py::dict report_dict(const eval::EvalReport& r) {
  py::dict block, table;
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    block[py::int_(r.ks[i])] = r.block_recall[i];
    table[py::int_(r.ks[i])] = r.table_recall[i];
  }
  py::dict d;
  d["name"] = r.name;
  d["questions"] = r.question_count;
  d["missing"] = r.missing;
  d["block_recall"] = block;
  d["table_recall"] = table;
  return d;
}

std::vector<double> as_vector(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 1) throw Error("expected a 1-d array");
  return {a.data(), a.data() + a.shape(0)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Table-text block retrieval: BM25, dense dual encoder, denoising and rank-aware encoding";
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def("tokenize", [](const std::string& s) { return text::tokenize(s); });
  m.def("contrastive_loss",
        [](double positive, const std::vector<double>& negatives) {
          return retriever::contrastive_loss(positive, negatives);
        },
        py::arg("positive"), py::arg("negatives"));
  m.def("bce_loss", &denoise::bce_loss, py::arg("score"), py::arg("label"));

  py::class_<Bm25Index>(m, "Bm25Index")
      .def_static(
          "build",
          [](const std::vector<std::string>& texts, double k1, double b) {
            std::vector<std::vector<std::string>> docs;
            docs.reserve(texts.size());
            for (const auto& t : texts) docs.push_back(text::tokenize(t));
            return Bm25Index::build(docs, Bm25Params{k1, b});
          },
          py::arg("texts"), py::arg("k1") = 1.2, py::arg("b") = 0.75)
      .def_static("load", &Bm25Index::load)
      .def("save", &Bm25Index::save)
      .def("__len__", &Bm25Index::doc_count)
      .def("df", &Bm25Index::df)
      .def("idf", &Bm25Index::idf)
      .def("scores", &Bm25Index::scores)
      .def("topk", [](const Bm25Index& ix, const std::string& q, std::size_t k) { return as_pairs(ix.topk(q, k)); },
           py::arg("query"), py::arg("k"));

  py::class_<retriever::DenseIndex>(m, "DenseIndex")
      .def(py::init([](std::vector<std::string> ids, py::array_t<float, py::array::c_style | py::array::forcecast> mat) {
             if (mat.ndim() != 2) throw Error("matrix must be 2-d");
             const auto n = static_cast<std::size_t>(mat.shape(0));
             const auto d = static_cast<std::size_t>(mat.shape(1));
             if (n != ids.size()) throw Error("matrix rows do not match ids");
             return retriever::DenseIndex(std::move(ids), d, std::vector<float>(mat.data(), mat.data() + n * d));
           }),
           py::arg("ids"), py::arg("matrix"))
      .def_static("load", &retriever::DenseIndex::load)
      .def("save", &retriever::DenseIndex::save)
      .def("__len__", &retriever::DenseIndex::size)
      .def_property_readonly("dim", &retriever::DenseIndex::dim)
      .def_property_readonly("ids", &retriever::DenseIndex::ids)
      .def("topk",
           [](const retriever::DenseIndex& ix, py::array_t<double, py::array::c_style | py::array::forcecast> q,
              std::size_t k) { return as_pairs(retriever::dense_topk(ix, as_vector(q), k)); },
           py::arg("query"), py::arg("k"));

  py::class_<rate::RankTrainConfig>(m, "RankTrainConfig")
      .def(py::init<>())
      .def_readwrite("r", &rate::RankTrainConfig::r)
      .def_readwrite("epochs", &rate::RankTrainConfig::epochs)
      .def_readwrite("batch", &rate::RankTrainConfig::batch)
      .def_readwrite("learning_rate", &rate::RankTrainConfig::learning_rate)
      .def_readwrite("seed", &rate::RankTrainConfig::seed)
      .def_readwrite("min_columns", &rate::RankTrainConfig::min_columns);

  py::class_<rate::RankEncoder>(m, "RankEncoder")
      .def_static(
          "train",
          [](const std::vector<std::vector<double>>& columns, const rate::RankTrainConfig& config) {
            return rate::train_rank_encoder(columns, config);
          },
          py::arg("columns"), py::arg("config") = rate::RankTrainConfig{})
      .def_static("load", &rate::RankEncoder::load)
      .def("save", &rate::RankEncoder::save)
      .def_property_readonly("dim", &rate::RankEncoder::dim)
      .def("embeddings",
           [](const rate::RankEncoder& e, const std::vector<double>& v) { return e.embeddings(v); })
      .def("max_logits", [](const rate::RankEncoder& e, const std::vector<double>& v) { return e.max_logits(v); })
      .def("min_logits", [](const rate::RankEncoder& e, const std::vector<double>& v) { return e.min_logits(v); })
      .def("head_accuracy", [](const rate::RankEncoder& e, const std::vector<std::vector<double>>& cols) {
        const auto a = rate::evaluate_heads(e, cols);
        return py::make_tuple(a.max_accuracy, a.min_accuracy, a.evaluated);
      });

  m.def("numeric_columns", &synth::numeric_columns, py::arg("n"), py::arg("seed"), py::arg("max_len") = 40);
  m.def(
      "write_synth",
      [](const std::string& dir, std::uint64_t seed, std::size_t n_tables, std::size_t n_questions) {
        synth::SynthConfig c;
        c.seed = seed;
        c.n_tables = n_tables;
        c.n_questions = n_questions;
        c.validate();
        synth::write_synth(synth::generate(c), c, dir);
      },
      py::arg("dir"), py::arg("seed") = 2024, py::arg("n_tables") = 300, py::arg("n_questions") = 5000);

  m.def("default_config", [] { return dump_config(RunConfig{}); });

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init([](const std::string& config_json, bool force) {
             return std::make_unique<Pipeline>(parse_config(config_json), force);
           }),
           py::arg("config_json") = "{}", py::arg("force") = false)
      .def_property_readonly("config", [](const Pipeline& p) { return dump_config(p.config()); })
      .def("artifact", &Pipeline::artifact)
      .def("synth", &Pipeline::synth)
      .def("ingest", &Pipeline::ingest)
      .def("index_sparse", &Pipeline::index_sparse)
      .def("train_rate", &Pipeline::train_rate)
      .def("train_detector", &Pipeline::train_detector)
      .def("denoise", &Pipeline::denoise)
      .def("train_retriever", &Pipeline::train_retriever)
      .def("index_dense", &Pipeline::index_dense)
      .def("build_all", &Pipeline::build_all)
      .def("block_count", [](Pipeline& p) { return p.blocks().size(); })
      .def("block_id", [](Pipeline& p, std::size_t i) { return p.blocks().blocks().at(i).block_id; })
      .def(
          "retrieve",
          [](Pipeline& p, const std::string& kind, const std::vector<std::string>& questions, std::size_t k) {
            std::vector<Query> qs;
            for (std::size_t i = 0; i < questions.size(); ++i) qs.push_back({"q" + std::to_string(i), questions[i]});
            std::vector<Hits> out;
            for (const auto& r : p.retrieve(parse_retriever_kind(kind), qs, k)) out.push_back(as_pairs(r.hits));
            return out;
          },
          py::arg("kind"), py::arg("questions"), py::arg("k") = 20)
      .def(
          "evaluate",
          [](Pipeline& p, const std::string& kind) {
            py::list out;
            for (const auto& r : p.evaluate(parse_retriever_kind(kind))) out.append(report_dict(r));
            return out;
          },
          py::arg("kind"))
      .def("ablate", [](Pipeline& p) {
        const auto res = p.ablate();
        py::dict out;
        for (std::size_t i = 0; i < res.arms.size(); ++i) {
          py::list reps;
          for (const auto& r : res.reports[i]) reps.append(report_dict(r));
          out[py::str(res.arms[i])] = reps;
        }
        return out;
      });
}
