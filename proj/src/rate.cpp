#include "tabret/rate.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <regex>

#include "tabret/binio.hpp"
#include "tabret/common.hpp"
#include "tabret/optim.hpp"

namespace tabret::rate {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::optional<double> days_since_epoch(int y, unsigned m, unsigned d) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) return std::nullopt;
  return static_cast<double>(sys_days{ymd}.time_since_epoch().count());
}

std::optional<unsigned> month_number(std::string name) {
  static const char* kMonths[] = {"january", "february", "march",     "april",   "may",      "june",
                                  "july",    "august",   "september", "october", "november", "december"};
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (name.ends_with('.')) name.pop_back();
  if (name == "sept") name = "sep";
  for (unsigned i = 0; i < 12; ++i) {
    const std::string full = kMonths[i];
    if (name == full || (name.size() == 3 && full.compare(0, 3, name) == 0)) return i + 1;
  }
  return std::nullopt;
}

}  // namespace

std::optional<double> parse_number(std::string_view cell) {
  std::string s;
  s.reserve(cell.size());
  for (std::size_t i = 0; i < cell.size(); ++i) {
    const auto c = static_cast<unsigned char>(cell[i]);
    if (std::isspace(c) || c == '%' || c == ',' || c == '$') continue;
    // UTF-8 currency signs: EUR E2 82 AC, GBP C2 A3, YEN C2 A5
    if (c == 0xE2 && i + 2 < cell.size() && static_cast<unsigned char>(cell[i + 1]) == 0x82 &&
        static_cast<unsigned char>(cell[i + 2]) == 0xAC) {
      i += 2;
      continue;
    }
    if (c == 0xC2 && i + 1 < cell.size() &&
        (static_cast<unsigned char>(cell[i + 1]) == 0xA3 ||
         static_cast<unsigned char>(cell[i + 1]) == 0xA5)) {
      i += 1;
      continue;
    }
    s.push_back(static_cast<char>(c));
  }
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  bool negative = false;
  if (s[0] == '+' || s[0] == '-') {
    negative = s[0] == '-';
    pos = 1;
  }
  std::size_t digits = 0, dots = 0;
  for (std::size_t i = pos; i < s.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      ++digits;
    } else if (s[i] == '.') {
      ++dots;
    } else {
      return std::nullopt;
    }
  }
  if (digits == 0 || dots > 1) return std::nullopt;
  double v = 0.0;
  const char* first = s.data() + pos;
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return negative ? -v : v;
}

std::optional<double> parse_date(std::string_view cell) {
  static const std::regex kIso(R"(^(\d{4})-(\d{1,2})-(\d{1,2})$)");
  static const std::regex kLong(R"(^([A-Za-z]+\.?)\s+(\d{1,2}),?\s+(\d{4})$)");
  static const std::regex kYear(R"(^(\d{4})$)");
  const std::string s = trim(cell);
  std::smatch m;
  if (std::regex_match(s, m, kIso)) {
    return days_since_epoch(std::stoi(m[1]), static_cast<unsigned>(std::stoi(m[2])),
                            static_cast<unsigned>(std::stoi(m[3])));
  }
  if (std::regex_match(s, m, kLong)) {
    const auto month = month_number(m[1]);
    if (!month) return std::nullopt;
    return days_since_epoch(std::stoi(m[3]), *month, static_cast<unsigned>(std::stoi(m[2])));
  }
  if (std::regex_match(s, m, kYear)) return days_since_epoch(std::stoi(m[1]), 1, 1);
  return std::nullopt;
}

std::vector<NumericColumn> extract_numeric_columns(const Table& table) {
  std::vector<NumericColumn> out;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    std::size_t non_empty = 0;
    std::vector<NumericValue> numbers, dates;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const std::string& cell = table.rows[r][c];
      if (trim(cell).empty()) continue;
      ++non_empty;
      if (auto v = parse_number(cell)) numbers.push_back({r, cell, *v});
      if (auto v = parse_date(cell)) dates.push_back({r, cell, *v});
    }
    if (non_empty == 0) continue;
    const double need = kQualifyingFraction * static_cast<double>(non_empty);
    NumericColumn col{table.table_id, c, table.header[c], {}, ValueKind::number};
    if (static_cast<double>(numbers.size()) >= need) {
      col.values = std::move(numbers);
    } else if (static_cast<double>(dates.size()) >= need) {
      col.values = std::move(dates);
      col.kind = ValueKind::date;
    } else {
      continue;
    }
    if (col.values.size() >= 2) out.push_back(std::move(col));
  }
  return out;
}

RankTokenSequence linearize_column(const NumericColumn& column) {
  RankTokenSequence seq;
  for (const auto& v : column.values) {
    if (!seq.text.empty()) seq.text.push_back(' ');
    seq.text += std::string(kColumnMarker) + " " + trim(column.header) + " is " + trim(v.raw);
    seq.marker_positions.push_back(seq.tokens.size());
    seq.tokens.emplace_back(kColumnMarker);
    seq.tokens.push_back(trim(column.header));
    seq.tokens.emplace_back("is");
    seq.tokens.push_back(trim(v.raw));
  }
  return seq;
}

std::vector<FeatureRow> column_features(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw Error("column_features: need at least two values");
  // Statistics over the sorted values so the result does not depend on row order.
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / static_cast<double>(n));
  const double sd_feature = sd;
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) sd = 1.0;

  const FeatureRow shared{0.0, std::tanh(mean / 1000.0), std::tanh(sd_feature / 1000.0),
                          static_cast<double>(std::min<std::size_t>(n, 64)) / 64.0};
  std::vector<FeatureRow> out(n, shared);
  for (std::size_t i = 0; i < n; ++i) out[i][0] = (values[i] - mean) / sd;
  return out;
}

std::vector<FeatureRow> column_features(const NumericColumn& column) {
  std::vector<double> v;
  v.reserve(column.values.size());
  for (const auto& x : column.values) v.push_back(x.value);
  return column_features(v);
}

double softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return std::log(z) - (logits[label] - mx);
}

RankNet RankNet::zeros(std::size_t r) {
  RankNet net;
  net.r = r;
  net.w1.assign(r * kFeatureWidth, 0.0);
  net.b1.assign(r, 0.0);
  net.w_max.assign(r, 0.0);
  net.w_min.assign(r, 0.0);
  return net;
}

RankNet RankNet::random(std::size_t r, std::uint64_t seed) {
  if (r == 0) throw Error("rank encoder dimension must be positive");
  Rng rng(seed);
  RankNet net = zeros(r);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(kFeatureWidth));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(r));
  for (double& w : net.w1) w = s1 * rng.normal();
  for (double& w : net.b1) w = 0.1 * rng.normal();
  for (double& w : net.w_max) w = s2 * rng.normal();
  for (double& w : net.w_min) w = s2 * rng.normal();
  return net;
}

std::vector<double> RankNet::hidden(const FeatureRow& f) const {
  std::vector<double> h(r);
  for (std::size_t j = 0; j < r; ++j) {
    double a = b1[j];
    for (std::size_t k = 0; k < kFeatureWidth; ++k) a += w1[j * kFeatureWidth + k] * f[k];
    h[j] = std::tanh(a);
  }
  return h;
}

std::vector<double*> RankNet::params() {
  std::vector<double*> p;
  p.reserve(param_count());
  for (auto* v : {&w1, &b1, &w_max, &w_min}) {
    for (double& x : *v) p.push_back(&x);
  }
  p.push_back(&c_max);
  p.push_back(&c_min);
  return p;
}

std::vector<const double*> RankNet::params() const {
  auto mut = const_cast<RankNet*>(this)->params();
  return {mut.begin(), mut.end()};
}

std::optional<ColumnLabels> column_labels(std::span<const double> values) {
  if (values.size() < 2) return std::nullopt;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (std::count(values.begin(), values.end(), *mx) > 1) return std::nullopt;
  if (std::count(values.begin(), values.end(), *mn) > 1) return std::nullopt;
  return ColumnLabels{static_cast<std::size_t>(mx - values.begin()),
                      static_cast<std::size_t>(mn - values.begin())};
}

double column_loss(const RankNet& net, const std::vector<FeatureRow>& features,
                   ColumnLabels labels, RankNet* grad) {
  const std::size_t n = features.size();
  const std::size_t r = net.r;
  std::vector<std::vector<double>> h(n);
  std::vector<double> lmax(n), lmin(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = net.hidden(features[i]);
    lmax[i] = net.c_max;
    lmin[i] = net.c_min;
    for (std::size_t j = 0; j < r; ++j) {
      lmax[i] += net.w_max[j] * h[i][j];
      lmin[i] += net.w_min[j] * h[i][j];
    }
  }
  const double loss = softmax_cross_entropy(lmax, labels.max_index) +
                      softmax_cross_entropy(lmin, labels.min_index);
  if (grad == nullptr) return loss;

  auto softmax_grad = [n](const std::vector<double>& logits, std::size_t label) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> g(n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (g[i] = std::exp(logits[i] - mx));
    for (std::size_t i = 0; i < n; ++i) g[i] = g[i] / z - (i == label ? 1.0 : 0.0);
    return g;
  };
  const auto gmax = softmax_grad(lmax, labels.max_index);
  const auto gmin = softmax_grad(lmin, labels.min_index);
  for (std::size_t i = 0; i < n; ++i) {
    grad->c_max += gmax[i];
    grad->c_min += gmin[i];
    for (std::size_t j = 0; j < r; ++j) {
      grad->w_max[j] += gmax[i] * h[i][j];
      grad->w_min[j] += gmin[i] * h[i][j];
      const double dh = gmax[i] * net.w_max[j] + gmin[i] * net.w_min[j];
      const double da = dh * (1.0 - h[i][j] * h[i][j]);
      grad->b1[j] += da;
      for (std::size_t k = 0; k < kFeatureWidth; ++k) {
        grad->w1[j * kFeatureWidth + k] += da * features[i][k];
      }
    }
  }
  return loss;
}

RankEncoder RankEncoder::detach_heads() const {
  RankEncoder e = *this;
  e.heads_ = false;
  std::fill(e.net_.w_max.begin(), e.net_.w_max.end(), 0.0);
  std::fill(e.net_.w_min.begin(), e.net_.w_min.end(), 0.0);
  e.net_.c_max = e.net_.c_min = 0.0;
  return e;
}

std::vector<std::vector<double>> RankEncoder::embeddings(std::span<const double> values) const {
  if (!trained_) throw Error("rank encoder is not trained");
  std::vector<std::vector<double>> out;
  for (const auto& f : column_features(values)) out.push_back(net_.hidden(f));
  return out;
}

std::vector<std::vector<double>> RankEncoder::embeddings(const NumericColumn& column) const {
  std::vector<double> v;
  for (const auto& x : column.values) v.push_back(x.value);
  return embeddings(v);
}

std::vector<double> RankEncoder::max_logits(std::span<const double> values) const {
  if (!heads_) throw Error("rank encoder heads were detached");
  std::vector<double> out;
  for (const auto& h : embeddings(values)) out.push_back(dot(h, net_.w_max) + net_.c_max);
  return out;
}

std::vector<double> RankEncoder::min_logits(std::span<const double> values) const {
  if (!heads_) throw Error("rank encoder heads were detached");
  std::vector<double> out;
  for (const auto& h : embeddings(values)) out.push_back(dot(h, net_.w_min) + net_.c_min);
  return out;
}

// Layout: "RATE" u32 version u32 r u32 input_width u32 flags(bit0 = heads)
//   f32 w1[r*input_width] f32 b1[r] [f32 w_max[r] f32 c_max f32 w_min[r] f32 c_min]
std::string RankEncoder::serialize() const {
  if (!trained_) throw Error("cannot save an untrained rank encoder");
  BinaryWriter w;
  w.magic("RATE");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(net_.r));
  w.u32(static_cast<std::uint32_t>(kFeatureWidth));
  w.u32(heads_ ? 1u : 0u);
  w.f32_array(net_.w1);
  w.f32_array(net_.b1);
  if (heads_) {
    w.f32_array(net_.w_max);
    w.f32(static_cast<float>(net_.c_max));
    w.f32_array(net_.w_min);
    w.f32(static_cast<float>(net_.c_min));
  }
  return w.bytes();
}

RankEncoder RankEncoder::deserialize(std::string bytes, const std::string& source) {
  BinaryReader rd(std::move(bytes), source);
  rd.expect_magic("RATE");
  rd.expect_version(kFormatVersion);
  const std::uint32_t r = rd.u32();
  if (rd.u32() != kFeatureWidth) throw Error(source + ": unexpected rank feature width");
  const std::uint32_t flags = rd.u32();
  if (r == 0) throw Error(source + ": rank dimension is zero");
  RankNet net = RankNet::zeros(r);
  net.w1 = rd.f32_array(r * kFeatureWidth);
  net.b1 = rd.f32_array(r);
  const bool heads = (flags & 1u) != 0;
  if (heads) {
    net.w_max = rd.f32_array(r);
    net.c_max = rd.f32();
    net.w_min = rd.f32_array(r);
    net.c_min = rd.f32();
  }
  rd.expect_end();
  return RankEncoder(std::move(net), heads);
}

void RankEncoder::save(const std::string& path) const { write_file_atomic(path, serialize()); }

RankEncoder RankEncoder::load(const std::string& path) { return deserialize(read_file(path), path); }

RankEncoder train_rank_encoder(const std::vector<std::vector<double>>& columns,
                               const RankTrainConfig& config, RankTrainReport* report) {
  if (config.r == 0 || config.epochs == 0 || config.batch == 0 || !(config.learning_rate > 0.0)) {
    throw Error("train_rank_encoder: invalid config");
  }
  if (columns.size() < config.min_columns) {
    throw Error("train_rank_encoder: need at least " + std::to_string(config.min_columns) +
                " columns, got " + std::to_string(columns.size()));
  }
  struct Example {
    std::vector<FeatureRow> features;
    ColumnLabels labels;
  };
  std::vector<Example> examples;
  RankTrainReport rep;
  for (const auto& col : columns) {
    const auto labels = column_labels(col);
    if (!labels) {
      ++rep.columns_skipped_ties;
      continue;
    }
    examples.push_back({column_features(col), *labels});
  }
  rep.columns_used = examples.size();
  if (examples.empty()) throw Error("train_rank_encoder: every column has tied extrema");

  Rng rng(config.seed);
  RankNet net = RankNet::random(config.r, rng.next_u64());
  DenseAdam adam(net.param_count(), AdamConfig{config.learning_rate});
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> flat(net.param_count()), flat_grad(net.param_count());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      RankNet grad = RankNet::zeros(config.r);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[order[i]];
        batch_loss += column_loss(net, ex.features, ex.labels, &grad);
      }
      epoch_loss += batch_loss;
      const double inv = 1.0 / static_cast<double>(end - start);
      auto p = net.params();
      auto g = grad.params();
      for (std::size_t k = 0; k < p.size(); ++k) {
        flat[k] = *p[k];
        flat_grad[k] = *g[k] * inv;
      }
      adam.step(flat, flat_grad);
      for (std::size_t k = 0; k < p.size(); ++k) *p[k] = flat[k];
    }
    rep.epoch_loss.push_back(epoch_loss / static_cast<double>(examples.size()));
  }
  for (double* p : net.params()) *p = round_to_float(*p);
  if (report) *report = std::move(rep);
  return RankEncoder(std::move(net), true);
}

RankEncoder train_rank_encoder(const std::vector<NumericColumn>& columns,
                               const RankTrainConfig& config, RankTrainReport* report) {
  std::vector<std::vector<double>> values;
  values.reserve(columns.size());
  for (const auto& c : columns) {
    std::vector<double> v;
    for (const auto& x : c.values) v.push_back(x.value);
    values.push_back(std::move(v));
  }
  return train_rank_encoder(values, config, report);
}

std::vector<std::vector<double>> rank_embeddings(const RankEncoder& encoder,
                                                 const NumericColumn& column) {
  return encoder.embeddings(column);
}

HeadAccuracy evaluate_heads(const RankEncoder& encoder,
                            const std::vector<std::vector<double>>& columns) {
  HeadAccuracy acc;
  std::size_t max_hits = 0, min_hits = 0;
  for (const auto& col : columns) {
    const auto labels = column_labels(col);
    if (!labels) continue;
    const auto lmax = encoder.max_logits(col);
    const auto lmin = encoder.min_logits(col);
    const auto amax = static_cast<std::size_t>(std::max_element(lmax.begin(), lmax.end()) - lmax.begin());
    const auto amin = static_cast<std::size_t>(std::max_element(lmin.begin(), lmin.end()) - lmin.begin());
    max_hits += amax == labels->max_index;
    min_hits += amin == labels->min_index;
    ++acc.evaluated;
  }
  if (acc.evaluated > 0) {
    acc.max_accuracy = static_cast<double>(max_hits) / static_cast<double>(acc.evaluated);
    acc.min_accuracy = static_cast<double>(min_hits) / static_cast<double>(acc.evaluated);
  }
  return acc;
}

std::vector<std::vector<double>> pooled_row_embeddings(const RankEncoder& encoder,
                                                       const Table& table) {
  const std::size_t r = encoder.dim();
  std::vector<std::vector<double>> pooled(table.rows.size(), std::vector<double>(r, 0.0));
  std::vector<std::size_t> counts(table.rows.size(), 0);
  for (const auto& col : extract_numeric_columns(table)) {
    const auto emb = encoder.embeddings(col);
    for (std::size_t i = 0; i < col.values.size(); ++i) {
      auto& dst = pooled[col.values[i].row_index];
      for (std::size_t j = 0; j < r; ++j) dst[j] += emb[i][j];
      ++counts[col.values[i].row_index];
    }
  }
  for (std::size_t row = 0; row < pooled.size(); ++row) {
    if (counts[row] == 0) continue;
    for (double& x : pooled[row]) x /= static_cast<double>(counts[row]);
  }
  return pooled;
}

}  // namespace tabret::rate
