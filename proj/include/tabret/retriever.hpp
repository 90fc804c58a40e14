#pragma once

// Dual-encoder dense retriever. Questions and blocks are hashed bag-of-token
// vectors mapped to d dimensions by separate linear encoders; the block side
// additionally receives the block row's pooled rank embedding. Relevance is
// the dot product of the two encodings.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabret/bm25.hpp"
#include "tabret/corpus.hpp"
#include "tabret/denoise.hpp"
#include "tabret/rate.hpp"
#include "tabret/retrieval.hpp"
#include "tabret/text.hpp"

namespace tabret::retriever {

using Vector = std::vector<double>;

struct EncoderShape {
  std::uint32_t feature_dim = text::kDefaultFeatureDim;  // F
  std::size_t d = 256;
  std::size_t r = 0;  // 0 disables rank features
  bool normalize = false;
};

class DualEncoder {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  DualEncoder() = default;
  // Tied random initialization: W_Q and the text rows of W_B start from the
  // same N(0, 1/d) draw, the rank rows of W_B start at zero. With
  // `feature_scale` (length F) row i of both maps is multiplied by
  // feature_scale[i].
  static DualEncoder initialize(const EncoderShape& shape, std::uint64_t seed,
                                const std::vector<double>* feature_scale = nullptr);

  const EncoderShape& shape() const { return shape_; }
  bool initialized() const { return !wq_.empty(); }
  std::size_t block_input_dim() const { return shape_.feature_dim + shape_.r; }

  Vector encode_question(std::string_view question) const;
  Vector encode_question_features(const text::SparseVector& x) const;
  // `x` has dimension F + r: hashed block text then the pooled rank embedding.
  Vector encode_block_input(const text::SparseVector& x) const;

  // Row `feature` of W_Q / W_B (length d).
  std::span<double> wq_row(std::size_t feature) { return {wq_.data() + feature * shape_.d, shape_.d}; }
  std::span<double> wb_row(std::size_t feature) { return {wb_.data() + feature * shape_.d, shape_.d}; }
  std::span<const double> wq_row(std::size_t feature) const { return {wq_.data() + feature * shape_.d, shape_.d}; }
  std::span<const double> wb_row(std::size_t feature) const { return {wb_.data() + feature * shape_.d, shape_.d}; }

  std::vector<double>& wq() { return wq_; }
  std::vector<double>& wb() { return wb_; }

  std::string serialize() const;
  static DualEncoder deserialize(std::string bytes, const std::string& source = "<model>");
  void save(const std::string& path) const;
  static DualEncoder load(const std::string& path);

 private:
  Vector project(const std::vector<double>& w, const text::SparseVector& x) const;

  EncoderShape shape_;
  std::vector<double> wq_;  // F x d, row-major by input feature
  std::vector<double> wb_;  // (F + r) x d
};

// Dot product; throws on a dimension mismatch.
double similarity(std::span<const double> vq, std::span<const double> vb);

// -log(e^{s+} / (e^{s+} + sum_i e^{s_i-})), evaluated after subtracting the
// maximum score. Requires at least one negative.
double contrastive_loss(double positive, std::span<const double> negatives);

// Rebuilds a table (title, header, rows) from its blocks.
Table table_from_blocks(const BlockStore& blocks, std::string_view table_id);

// Block-side inputs of dimension F + r for every block. With an encoder the
// tail holds the mean rank embedding of the row's numeric cells.
std::vector<text::SparseVector> block_inputs(const BlockStore& blocks, std::uint32_t feature_dim,
                                             const rate::RankEncoder* encoder);

struct BlockEncoding {
  std::string block_id;
  Vector vector;
  Vector rate_pooled;
};

BlockEncoding encode_block(const DualEncoder& model, const BlockStore& blocks, std::size_t ordinal,
                           const rate::RankEncoder* encoder);

// One training question: a positive block, BM25 hard negatives, and the
// blocks that must never be used as its negatives.
struct TrainItem {
  std::string question;
  text::SparseVector features;
  std::size_t positive = 0;
  std::vector<std::size_t> hard_negatives;
  std::vector<std::size_t> excluded;  // the question's answer blocks
};

struct RowGrad {
  std::unordered_map<std::uint32_t, std::size_t> slot;
  std::vector<std::uint32_t> rows;  // insertion order
  std::vector<double> data;         // rows.size() x d

  std::span<double> row(std::uint32_t r, std::size_t d);
  void clear() { slot.clear(); rows.clear(); data.clear(); }
};

struct BatchGrad {
  RowGrad wq, wb;
};

// Mean contrastive loss over a batch. Each item's candidates are its
// positive, its hard negatives and, with `in_batch`, the other items'
// positives that are not among its excluded blocks. When `grad` is non-null
// the gradient w.r.t. W_Q and W_B is accumulated into it.
double batch_loss(const DualEncoder& model, const std::vector<const TrainItem*>& items,
                  const std::vector<text::SparseVector>& inputs, bool in_batch, BatchGrad* grad);

struct TrainPair {
  std::string question;
  std::size_t positive = 0;
  std::vector<std::size_t> answer_blocks;
};

// One pair per question: the denoised chosen block.
std::vector<TrainPair> pairs_from_denoised(const denoise::DenoisedDataset& data);
// One pair per answer block (training without denoising).
std::vector<TrainPair> pairs_from_all_answers(const std::vector<QAInstance>& instances);

// Per-feature inverse document frequency over the block texts' hashed
// features, ln(1 + (N - df + 0.5) / (df + 0.5)); zero for features that occur
// in no block.
std::vector<double> feature_idf(const std::vector<text::SparseVector>& block_inputs,
                                std::uint32_t feature_dim);

struct RetrieverConfig {
  std::uint32_t feature_dim = text::kDefaultFeatureDim;
  std::size_t d = 256;
  bool use_rate = true;
  std::size_t m_hard = 2;
  std::size_t epochs = 12;
  std::size_t batch = 64;
  double learning_rate = 2e-3;
  std::uint64_t seed = 17;
  bool in_batch = true;
  bool normalize = false;
  bool idf_init = true;  // scale the tied initialization by feature_idf
};

struct RetrieverTrainReport {
  std::size_t pairs_used = 0;
  std::size_t skipped_no_negative = 0;
  std::vector<double> epoch_loss;
};

// Builds training items: hard negatives are the top-m_hard positive-score
// BM25 blocks that are not answer blocks. Pairs without any are skipped.
std::vector<TrainItem> make_train_items(const std::vector<TrainPair>& pairs, const Bm25Index& bm25,
                                        std::uint32_t feature_dim, std::size_t m_hard,
                                        std::size_t* skipped = nullptr);

// The rank encoder is only read; its weights are never updated.
DualEncoder train_retriever(const std::vector<TrainPair>& pairs, const BlockStore& blocks,
                            const Bm25Index& bm25, const rate::RankEncoder* rank_encoder,
                            const RetrieverConfig& config, RetrieverTrainReport* report = nullptr);

class DenseIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  DenseIndex() = default;
  DenseIndex(std::vector<std::string> ids, std::size_t d, std::vector<float> matrix);

  static DenseIndex build(const DualEncoder& model, const BlockStore& blocks,
                          const rate::RankEncoder* rank_encoder);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return d_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> row(std::size_t i) const { return {matrix_.data() + i * d_, d_}; }

  // Exact top-k by dot product, ties to the lower ordinal.
  std::vector<ScoredBlock> topk(std::span<const double> query, std::size_t k) const;
  std::vector<double> scores(std::span<const double> query) const;

  std::string serialize() const;
  static DenseIndex deserialize(std::string bytes, const std::string& source = "<index>");
  void save(const std::string& path) const;
  static DenseIndex load(const std::string& path);

  bool operator==(const DenseIndex&) const = default;

 private:
  std::vector<std::string> ids_;
  std::size_t d_ = 0;
  std::vector<float> matrix_;  // N x d, row-major
};

std::vector<ScoredBlock> dense_topk(const DenseIndex& index, std::span<const double> query,
                                    std::size_t k);

}  // namespace tabret::retriever
