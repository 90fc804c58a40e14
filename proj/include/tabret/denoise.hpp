#pragma once

// Training-set denoising: partition questions by how many blocks of their
// table contain the answer, train a false-positive detector on the
// unambiguous partition with BM25-mined negatives, and keep only the
// top-scoring answer block for every ambiguous question.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tabret/bm25.hpp"
#include "tabret/common.hpp"
#include "tabret/corpus.hpp"
#include "tabret/text.hpp"

namespace tabret::denoise {

struct DatasetPartition {
  std::vector<QAInstance> d1;      // exactly one answer block
  std::vector<QAInstance> d2plus;  // two or more
  std::vector<QAInstance> d0;      // none; excluded from training
};

DatasetPartition partition_dataset(const std::vector<QAInstance>& instances);

class NoNegativeAvailable : public Error {
 public:
  using Error::Error;
};

// Highest-BM25 block of B that does not contain the answer; when every
// candidate scores zero, the lowest ordinal. Throws NoNegativeAvailable when
// every block of B contains the answer.
std::size_t mine_detector_negative(const QAInstance& instance, const Bm25Index& index);

inline constexpr std::uint32_t kDefaultDetectorDim = 1u << 16;
inline constexpr double kScoreClamp = 1e-7;
inline constexpr std::uint64_t kCrossSeed = 0x63726f7373303031ULL;  // "cross001"

// Features of "question [SEP] block": unit-norm hashed unigrams/bigrams of
// the joined token stream, plus match features for every distinct question
// token that also occurs in the block (one hashed per-token feature and one
// per-class feature, numeric or word), scaled by 1/sqrt(#question tokens).
text::SparseVector pair_features(std::string_view question, std::string_view block_text,
                                 std::uint32_t dim);

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// -[y ln s + (1-y) ln(1-s)] with s clamped to [1e-7, 1-1e-7].
double bce_loss(double s, int label);

struct LinearScorer {
  std::vector<double> weights;
  double bias = 0.0;

  double logit(const text::SparseVector& x) const;
  double score(const text::SparseVector& x) const { return sigmoid(logit(x)); }
};

struct LabeledPair {
  text::SparseVector features;
  int label = 0;
};

// Mean BCE over `pairs`; accumulates the gradient of the mean when `grad_w`
// is non-null (sized like the weights).
double pairs_loss(const LinearScorer& scorer, const std::vector<LabeledPair>& pairs,
                  std::vector<double>* grad_w, double* grad_b);

struct DetectorConfig {
  std::size_t epochs = 10;
  std::size_t batch = 32;
  double learning_rate = 0.05;
  std::uint64_t seed = 11;
  std::uint32_t feature_dim = kDefaultDetectorDim;
  std::size_t min_instances = 50;
};

struct DetectorTrainReport {
  std::size_t instances_used = 0;
  std::size_t skipped_no_negative = 0;
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
  double final_loss = 0.0;
};

class Detector {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  Detector() = default;
  Detector(std::uint32_t dim, LinearScorer scorer) : dim_(dim), scorer_(std::move(scorer)) {}

  bool trained() const { return dim_ != 0; }
  std::uint32_t feature_dim() const { return dim_; }
  const LinearScorer& scorer() const { return scorer_; }

  // Relevance in (0, 1); higher is more relevant.
  double score(std::string_view question, const FusedBlock& block) const;

  std::string serialize() const;
  static Detector deserialize(std::string bytes, const std::string& source = "<detector>");
  void save(const std::string& path) const;
  static Detector load(const std::string& path);

 private:
  std::uint32_t dim_ = 0;
  LinearScorer scorer_;
};

// One positive (the unique answer block) and one mined negative per usable
// D1 instance; instances without a negative are skipped.
std::vector<LabeledPair> detector_pairs(const std::vector<QAInstance>& d1, const BlockStore& blocks,
                                        const Bm25Index& index, std::uint32_t dim,
                                        std::size_t* skipped = nullptr);

Detector train_detector(const std::vector<QAInstance>& d1, const BlockStore& blocks,
                        const Bm25Index& index, const DetectorConfig& config,
                        DetectorTrainReport* report = nullptr);

double detector_score(const Detector& detector, std::string_view question, const FusedBlock& block);

enum class Provenance { d1_kept, d2plus_denoised };

struct DenoisedInstance {
  QAInstance instance;
  std::size_t chosen_block = 0;
  Provenance provenance = Provenance::d1_kept;
  std::optional<double> score;  // detector score; absent for D1 pass-through
};

struct DenoisedDataset {
  std::vector<DenoisedInstance> instances;
  std::size_t dropped_d0 = 0;
};

// Argmax-score answer block per D2+ instance, ties to the lowest ordinal.
std::vector<DenoisedInstance> denoise(const std::vector<QAInstance>& d2plus,
                                      const Detector& detector, const BlockStore& blocks);

// D1 passes through with its single answer block, D2+ is denoised, D0 is
// dropped and counted.
DenoisedDataset denoise_dataset(const DatasetPartition& partition, const Detector& detector,
                                const BlockStore& blocks);

std::string provenance_name(Provenance p);

// Agreement of denoised choices with oracle blocks over D2+ instances that
// carry one, against the RandomPick expectation mean(1 / |answer_blocks|).
struct OracleAgreement {
  std::size_t evaluated = 0;
  std::size_t agree = 0;
  double random_pick = 0.0;

  double accuracy() const { return evaluated ? static_cast<double>(agree) / static_cast<double>(evaluated) : 0.0; }
};

OracleAgreement oracle_agreement(const std::vector<DenoisedInstance>& instances);

// {"question_id","chosen_block","provenance","score"} per line.
std::string denoised_records(const DenoisedDataset& data, const BlockStore& blocks);
// Re-attaches records to their instances; unknown question ids are errors.
DenoisedDataset read_denoised(const std::string& path, const std::vector<QAInstance>& instances,
                              const BlockStore& blocks);

}  // namespace tabret::denoise
