#pragma once

// Rank-aware table encoding: numeric column extraction, [C_SEP]
// linearization, and the rank-aware column encoder trained with max/min heads
// whose hidden representation becomes the per-value rank embedding.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabret/corpus.hpp"

namespace tabret::rate {

enum class ValueKind { number, date };

struct NumericValue {
  std::size_t row_index = 0;
  std::string raw;
  double value = 0.0;
};

struct NumericColumn {
  std::string table_id;
  std::size_t column_index = 0;
  std::string header;
  std::vector<NumericValue> values;
  ValueKind kind = ValueKind::number;
};

// Accepts sign and decimal point after stripping "%", thousands separators,
// currency symbols and whitespace.
std::optional<double> parse_number(std::string_view cell);
// "YYYY-MM-DD", "Month D, YYYY" (full or three-letter month) or "YYYY",
// as days since 1970-01-01.
std::optional<double> parse_date(std::string_view cell);

inline constexpr double kQualifyingFraction = 0.8;

// Columns where >= 80% of non-empty cells parse as numbers (else as dates),
// keeping only parsed cells; columns with fewer than two values are dropped.
std::vector<NumericColumn> extract_numeric_columns(const Table& table);

inline constexpr std::string_view kColumnMarker = "[C_SEP]";

struct RankTokenSequence {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<std::size_t> marker_positions;  // one per value, row order
};

RankTokenSequence linearize_column(const NumericColumn& column);

inline constexpr std::size_t kFeatureWidth = 4;
using FeatureRow = std::array<double, kFeatureWidth>;

// Per value: [z, tanh(mean/1000), tanh(stddev/1000), min(n, 64)/64] with
// population statistics; a zero stddev is replaced by 1.
std::vector<FeatureRow> column_features(std::span<const double> values);
std::vector<FeatureRow> column_features(const NumericColumn& column);

// Softmax cross-entropy of `logits` against a one-hot label.
double softmax_cross_entropy(std::span<const double> logits, std::size_t label);

// One-hidden-layer network. Hidden h = tanh(W1 f + b1) is the rank
// embedding; the max/min heads are linear maps from h to a logit.
struct RankNet {
  std::size_t r = 0;
  std::vector<double> w1;  // r x kFeatureWidth, row-major
  std::vector<double> b1;  // r
  std::vector<double> w_max, w_min;  // r
  double c_max = 0.0, c_min = 0.0;

  static RankNet zeros(std::size_t r);
  static RankNet random(std::size_t r, std::uint64_t seed);

  std::vector<double> hidden(const FeatureRow& f) const;
  std::size_t param_count() const { return w1.size() + b1.size() + w_max.size() + w_min.size() + 2; }
  // Flat views over every parameter, in a fixed order.
  std::vector<double*> params();
  std::vector<const double*> params() const;
};

struct ColumnLabels {
  std::size_t max_index;
  std::size_t min_index;
};

// Labels for a column, or nullopt when the max or the min is tied.
std::optional<ColumnLabels> column_labels(std::span<const double> values);

// max-head loss + min-head loss for one column. When `grad` is non-null its
// parameters receive the gradient (added, not overwritten).
double column_loss(const RankNet& net, const std::vector<FeatureRow>& features,
                   ColumnLabels labels, RankNet* grad);

struct RankTrainConfig {
  std::size_t r = 16;
  std::size_t epochs = 8;
  std::size_t batch = 32;
  double learning_rate = 0.01;
  std::uint64_t seed = 7;
  std::size_t min_columns = 100;
};

struct RankTrainReport {
  std::size_t columns_used = 0;
  std::size_t columns_skipped_ties = 0;
  std::vector<double> epoch_loss;
};

class RankEncoder {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  RankEncoder() = default;
  explicit RankEncoder(RankNet net, bool heads = true) : net_(std::move(net)), heads_(heads), trained_(true) {}

  bool trained() const { return trained_; }
  bool has_heads() const { return heads_; }
  std::size_t dim() const { return net_.r; }
  const RankNet& net() const { return net_; }

  // Copy without the max/min heads; only the representation map remains.
  RankEncoder detach_heads() const;

  // One r-dimensional embedding per column value, in value order.
  std::vector<std::vector<double>> embeddings(const NumericColumn& column) const;
  std::vector<std::vector<double>> embeddings(std::span<const double> values) const;

  // Head logits per value; requires heads.
  std::vector<double> max_logits(std::span<const double> values) const;
  std::vector<double> min_logits(std::span<const double> values) const;

  std::string serialize() const;
  static RankEncoder deserialize(std::string bytes, const std::string& source = "<rate>");
  void save(const std::string& path) const;
  static RankEncoder load(const std::string& path);

 private:
  RankNet net_;
  bool heads_ = false;
  bool trained_ = false;
};

// Trains hidden layer + both heads; columns with tied extrema are skipped.
RankEncoder train_rank_encoder(const std::vector<NumericColumn>& columns,
                               const RankTrainConfig& config, RankTrainReport* report = nullptr);
RankEncoder train_rank_encoder(const std::vector<std::vector<double>>& columns,
                               const RankTrainConfig& config, RankTrainReport* report = nullptr);

std::vector<std::vector<double>> rank_embeddings(const RankEncoder& encoder,
                                                 const NumericColumn& column);

struct HeadAccuracy {
  double max_accuracy = 0.0;
  double min_accuracy = 0.0;
  std::size_t evaluated = 0;
};

// Argmax accuracy of both heads on columns without tied extrema.
HeadAccuracy evaluate_heads(const RankEncoder& encoder,
                            const std::vector<std::vector<double>>& columns);

// Mean rank embedding of each row's numeric cells (zero when none), one
// r-vector per table row.
std::vector<std::vector<double>> pooled_row_embeddings(const RankEncoder& encoder,
                                                       const Table& table);

}  // namespace tabret::rate
