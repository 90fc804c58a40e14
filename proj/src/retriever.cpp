#include "tabret/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabret/binio.hpp"
#include "tabret/common.hpp"
#include "tabret/optim.hpp"

namespace tabret::retriever {
namespace {

constexpr std::uint32_t kFlagRate = 1u;
constexpr std::uint32_t kFlagNormalize = 2u;

double l2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// v = u / |u| (zero stays zero).
Vector normalized(const Vector& u) {
  const double n = l2(u);
  if (n == 0.0) return u;
  Vector v(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) v[i] = u[i] / n;
  return v;
}

// Gradient w.r.t. u given the gradient w.r.t. v = u / |u|.
Vector normalize_backward(const Vector& u, const Vector& v, const Vector& dv) {
  const double n = l2(u);
  if (n == 0.0) return Vector(u.size(), 0.0);
  const double proj = dot(v, dv);
  Vector du(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) du[i] = (dv[i] - v[i] * proj) / n;
  return du;
}

}  // namespace

DualEncoder DualEncoder::initialize(const EncoderShape& shape, std::uint64_t seed,
                                    const std::vector<double>* feature_scale) {
  text::validate_feature_dim(shape.feature_dim);
  if (shape.d < 8) throw Error("embedding dimension d must be >= 8");
  DualEncoder m;
  m.shape_ = shape;
  const std::size_t f = shape.feature_dim;
  m.wq_.resize(f * shape.d);
  m.wb_.assign((f + shape.r) * shape.d, 0.0);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(shape.d));
  if (feature_scale && feature_scale->size() != f) throw Error("feature scale has the wrong length");
  for (std::size_t i = 0; i < f * shape.d; ++i) {
    const double s = feature_scale ? (*feature_scale)[i / shape.d] : 1.0;
    m.wq_[i] = round_to_float(s * scale * rng.normal());
    m.wb_[i] = m.wq_[i];
  }
  return m;
}

Vector DualEncoder::project(const std::vector<double>& w, const text::SparseVector& x) const {
  const std::size_t d = shape_.d;
  Vector u(d, 0.0);
  for (const auto& e : x.entries) {
    const double* row = w.data() + static_cast<std::size_t>(e.index) * d;
    for (std::size_t j = 0; j < d; ++j) u[j] += e.weight * row[j];
  }
  return shape_.normalize ? normalized(u) : u;
}

Vector DualEncoder::encode_question(std::string_view question) const {
  return encode_question_features(text::hash_features(text::tokenize(question), shape_.feature_dim));
}

Vector DualEncoder::encode_question_features(const text::SparseVector& x) const {
  if (!initialized()) throw Error("dual encoder is not initialized");
  if (x.dim != shape_.feature_dim) throw Error("question features have the wrong dimension");
  return project(wq_, x);
}

Vector DualEncoder::encode_block_input(const text::SparseVector& x) const {
  if (!initialized()) throw Error("dual encoder is not initialized");
  if (x.dim != block_input_dim()) throw Error("block input has the wrong dimension");
  return project(wb_, x);
}

// Layout: "DOTR" u32 version u32 F u32 d u32 r u32 flags(bit0 rate, bit1 normalize)
//   f32 W_Q[F*d] f32 W_B[(F+r)*d]
std::string DualEncoder::serialize() const {
  if (!initialized()) throw Error("cannot save an uninitialized dual encoder");
  BinaryWriter w;
  w.magic("DOTR");
  w.u32(kFormatVersion);
  w.u32(shape_.feature_dim);
  w.u32(static_cast<std::uint32_t>(shape_.d));
  w.u32(static_cast<std::uint32_t>(shape_.r));
  w.u32((shape_.r > 0 ? kFlagRate : 0u) | (shape_.normalize ? kFlagNormalize : 0u));
  w.f32_array(wq_);
  w.f32_array(wb_);
  return w.bytes();
}

DualEncoder DualEncoder::deserialize(std::string bytes, const std::string& source) {
  BinaryReader rd(std::move(bytes), source);
  rd.expect_magic("DOTR");
  rd.expect_version(kFormatVersion);
  DualEncoder m;
  m.shape_.feature_dim = rd.u32();
  text::validate_feature_dim(m.shape_.feature_dim);
  m.shape_.d = rd.u32();
  m.shape_.r = rd.u32();
  const std::uint32_t flags = rd.u32();
  m.shape_.normalize = (flags & kFlagNormalize) != 0;
  if (((flags & kFlagRate) != 0) != (m.shape_.r > 0)) {
    throw Error(source + ": rank flag disagrees with rank dimension");
  }
  m.wq_ = rd.f32_array(static_cast<std::size_t>(m.shape_.feature_dim) * m.shape_.d);
  m.wb_ = rd.f32_array((m.shape_.feature_dim + m.shape_.r) * m.shape_.d);
  rd.expect_end();
  return m;
}

void DualEncoder::save(const std::string& path) const { write_file_atomic(path, serialize()); }

DualEncoder DualEncoder::load(const std::string& path) { return deserialize(read_file(path), path); }

double similarity(std::span<const double> vq, std::span<const double> vb) {
  if (vq.size() != vb.size()) throw Error("similarity: dimension mismatch");
  return dot(vq, vb);
}

double contrastive_loss(double positive, std::span<const double> negatives) {
  if (negatives.empty()) throw Error("contrastive_loss: need at least one negative");
  double mx = positive;
  for (double s : negatives) mx = std::max(mx, s);
  double z = std::exp(positive - mx);
  for (double s : negatives) z += std::exp(s - mx);
  return std::max(0.0, std::log(z) - (positive - mx));
}

Table table_from_blocks(const BlockStore& blocks, std::string_view table_id) {
  const auto& ords = blocks.table_blocks(table_id);
  if (ords.empty()) throw Error("unknown table " + std::string(table_id));
  Table t;
  t.table_id = std::string(table_id);
  t.title = blocks[ords.front()].title;
  t.header = blocks[ords.front()].header;
  t.rows.resize(ords.size());
  for (std::size_t o : ords) {
    const auto& b = blocks[o];
    if (b.row_index >= t.rows.size()) throw Error("table " + t.table_id + " has a gap in its rows");
    t.rows[b.row_index] = b.row_cells;
  }
  return t;
}

std::vector<text::SparseVector> block_inputs(const BlockStore& blocks, std::uint32_t feature_dim,
                                             const rate::RankEncoder* encoder) {
  const std::size_t r = encoder ? encoder->dim() : 0;
  if (encoder && !encoder->trained()) throw Error("rank features requested with an untrained rank encoder");
  std::vector<text::SparseVector> out;
  out.reserve(blocks.size());
  std::string current_table;
  std::vector<std::vector<double>> pooled;
  for (std::size_t o = 0; o < blocks.size(); ++o) {
    const auto& b = blocks[o];
    auto x = text::hash_features(text::tokenize(b.linearized_text), feature_dim);
    x.dim = feature_dim + static_cast<std::uint32_t>(r);
    if (encoder) {
      if (b.table_id != current_table) {
        current_table = b.table_id;
        pooled = rate::pooled_row_embeddings(*encoder, table_from_blocks(blocks, b.table_id));
      }
      for (std::size_t k = 0; k < r; ++k) {
        const double v = pooled[b.row_index][k];
        if (v != 0.0) x.entries.push_back({feature_dim + static_cast<std::uint32_t>(k), v});
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

BlockEncoding encode_block(const DualEncoder& model, const BlockStore& blocks, std::size_t ordinal,
                           const rate::RankEncoder* encoder) {
  const auto& shape = model.shape();
  if (encoder && encoder->dim() != shape.r) throw Error("rank encoder dimension does not match the model");
  if (!encoder && shape.r != 0) throw Error("model expects rank features but no rank encoder was given");
  const auto& b = blocks[ordinal];
  BlockEncoding enc;
  enc.block_id = b.block_id;
  enc.rate_pooled.assign(shape.r, 0.0);
  auto x = text::hash_features(text::tokenize(b.linearized_text), shape.feature_dim);
  x.dim = shape.feature_dim + static_cast<std::uint32_t>(shape.r);
  if (encoder) {
    const auto pooled = rate::pooled_row_embeddings(*encoder, table_from_blocks(blocks, b.table_id));
    enc.rate_pooled = pooled[b.row_index];
    for (std::size_t k = 0; k < shape.r; ++k) {
      if (enc.rate_pooled[k] != 0.0) {
        x.entries.push_back({shape.feature_dim + static_cast<std::uint32_t>(k), enc.rate_pooled[k]});
      }
    }
  }
  enc.vector = model.encode_block_input(x);
  return enc;
}

std::span<double> RowGrad::row(std::uint32_t r, std::size_t d) {
  auto [it, inserted] = slot.try_emplace(r, rows.size());
  if (inserted) {
    rows.push_back(r);
    data.resize(data.size() + d, 0.0);
  }
  return {data.data() + it->second * d, d};
}

double batch_loss(const DualEncoder& model, const std::vector<const TrainItem*>& items,
                  const std::vector<text::SparseVector>& inputs, bool in_batch, BatchGrad* grad) {
  const std::size_t d = model.shape().d;
  const bool norm = model.shape().normalize;
  const std::size_t nb = items.size();
  if (nb == 0) return 0.0;

  // Candidate lists per item and the unique blocks they reference.
  std::vector<std::vector<std::size_t>> cands(nb);
  std::unordered_map<std::size_t, std::size_t> local;
  std::vector<std::size_t> uniq;
  auto intern = [&](std::size_t o) {
    auto [it, ins] = local.try_emplace(o, uniq.size());
    if (ins) uniq.push_back(o);
    return it->second;
  };
  for (std::size_t i = 0; i < nb; ++i) {
    const TrainItem& it = *items[i];
    auto& c = cands[i];
    auto usable = [&](std::size_t o) {
      return std::find(c.begin(), c.end(), o) == c.end() &&
             std::find(it.excluded.begin(), it.excluded.end(), o) == it.excluded.end();
    };
    c.push_back(it.positive);
    for (std::size_t o : it.hard_negatives) {
      if (usable(o)) c.push_back(o);
    }
    if (in_batch) {
      for (std::size_t j = 0; j < nb; ++j) {
        if (j != i && usable(items[j]->positive)) c.push_back(items[j]->positive);
      }
    }
    for (std::size_t o : c) intern(o);
  }

  auto project_raw = [&](const std::vector<double>& w, const text::SparseVector& x) {
    Vector u(d, 0.0);
    for (const auto& e : x.entries) {
      const double* row = w.data() + static_cast<std::size_t>(e.index) * d;
      for (std::size_t j = 0; j < d; ++j) u[j] += e.weight * row[j];
    }
    return u;
  };
  auto& wq = const_cast<DualEncoder&>(model).wq();
  auto& wb = const_cast<DualEncoder&>(model).wb();

  std::vector<Vector> uq(nb), vq(nb), ub(uniq.size()), vb(uniq.size());
  for (std::size_t i = 0; i < nb; ++i) {
    uq[i] = project_raw(wq, items[i]->features);
    vq[i] = norm ? normalized(uq[i]) : uq[i];
  }
  for (std::size_t k = 0; k < uniq.size(); ++k) {
    ub[k] = project_raw(wb, inputs[uniq[k]]);
    vb[k] = norm ? normalized(ub[k]) : ub[k];
  }

  std::vector<Vector> dvq(nb, Vector(d, 0.0)), dvb(uniq.size(), Vector(d, 0.0));
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    const auto& c = cands[i];
    std::vector<double> s(c.size());
    for (std::size_t j = 0; j < c.size(); ++j) s[j] = dot(vq[i], vb[local[c[j]]]);
    if (c.size() < 2) continue;  // no negatives survived exclusion
    total += contrastive_loss(s[0], std::span<const double>(s).subspan(1));
    if (!grad) continue;
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    std::vector<double> p(c.size());
    for (std::size_t j = 0; j < c.size(); ++j) z += (p[j] = std::exp(s[j] - mx));
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double g = (p[j] / z - (j == 0 ? 1.0 : 0.0)) * inv;
      const std::size_t k = local[c[j]];
      for (std::size_t t = 0; t < d; ++t) {
        dvq[i][t] += g * vb[k][t];
        dvb[k][t] += g * vq[i][t];
      }
    }
  }
  if (grad) {
    for (std::size_t i = 0; i < nb; ++i) {
      const Vector du = norm ? normalize_backward(uq[i], vq[i], dvq[i]) : dvq[i];
      for (const auto& e : items[i]->features.entries) {
        auto row = grad->wq.row(e.index, d);
        for (std::size_t t = 0; t < d; ++t) row[t] += e.weight * du[t];
      }
    }
    for (std::size_t k = 0; k < uniq.size(); ++k) {
      const Vector du = norm ? normalize_backward(ub[k], vb[k], dvb[k]) : dvb[k];
      for (const auto& e : inputs[uniq[k]].entries) {
        auto row = grad->wb.row(e.index, d);
        for (std::size_t t = 0; t < d; ++t) row[t] += e.weight * du[t];
      }
    }
  }
  return total * inv;
}

std::vector<double> feature_idf(const std::vector<text::SparseVector>& block_inputs,
                                std::uint32_t feature_dim) {
  std::vector<std::size_t> df(feature_dim, 0);
  for (const auto& x : block_inputs) {
    for (const auto& e : x.entries) {
      if (e.index < feature_dim) ++df[e.index];
    }
  }
  const double n = static_cast<double>(block_inputs.size());
  std::vector<double> idf(feature_dim, 0.0);
  for (std::size_t i = 0; i < feature_dim; ++i) {
    if (df[i] == 0) continue;
    const double d = static_cast<double>(df[i]);
    idf[i] = std::log(1.0 + (n - d + 0.5) / (d + 0.5));
  }
  return idf;
}

std::vector<TrainPair> pairs_from_denoised(const denoise::DenoisedDataset& data) {
  std::vector<TrainPair> out;
  for (const auto& d : data.instances) {
    out.push_back({d.instance.question, d.chosen_block, d.instance.answer_blocks});
  }
  return out;
}

std::vector<TrainPair> pairs_from_all_answers(const std::vector<QAInstance>& instances) {
  std::vector<TrainPair> out;
  for (const auto& inst : instances) {
    for (std::size_t o : inst.answer_blocks) out.push_back({inst.question, o, inst.answer_blocks});
  }
  return out;
}

std::vector<TrainItem> make_train_items(const std::vector<TrainPair>& pairs, const Bm25Index& bm25,
                                        std::uint32_t feature_dim, std::size_t m_hard,
                                        std::size_t* skipped) {
  std::vector<TrainItem> items;
  std::size_t skip = 0;
  std::unordered_map<std::string, std::vector<double>> score_cache;
  for (const auto& p : pairs) {
    TrainItem it;
    it.question = p.question;
    it.positive = p.positive;
    it.excluded = p.answer_blocks;
    if (std::find(it.excluded.begin(), it.excluded.end(), p.positive) == it.excluded.end()) {
      it.excluded.push_back(p.positive);
    }
    auto cached = score_cache.find(p.question);
    if (cached == score_cache.end()) cached = score_cache.emplace(p.question, bm25.scores(p.question)).first;
    const auto& ex = it.excluded;
    const auto hits = select_topk(cached->second, m_hard, [&ex](std::size_t o, double s) {
      return s > 0.0 && std::find(ex.begin(), ex.end(), o) == ex.end();
    });
    if (hits.empty()) {
      ++skip;
      continue;
    }
    for (const auto& h : hits) it.hard_negatives.push_back(h.ordinal);
    it.features = text::hash_features(text::tokenize(p.question), feature_dim);
    items.push_back(std::move(it));
  }
  if (skipped) *skipped = skip;
  return items;
}

DualEncoder train_retriever(const std::vector<TrainPair>& pairs, const BlockStore& blocks,
                            const Bm25Index& bm25, const rate::RankEncoder* rank_encoder,
                            const RetrieverConfig& config, RetrieverTrainReport* report) {
  if (pairs.empty()) throw Error("train_retriever: empty training set");
  if (config.epochs == 0 || config.batch == 0 || !(config.learning_rate > 0.0)) {
    throw Error("train_retriever: invalid config");
  }
  const rate::RankEncoder* enc = config.use_rate ? rank_encoder : nullptr;
  if (config.use_rate && (enc == nullptr || !enc->trained())) {
    throw Error("train_retriever: rank features enabled but the rank encoder is not trained");
  }

  RetrieverTrainReport rep;
  auto items = make_train_items(pairs, bm25, config.feature_dim, config.m_hard, &rep.skipped_no_negative);
  rep.pairs_used = items.size();
  if (items.empty()) throw Error("train_retriever: no pair has a minable negative");
  const auto inputs = block_inputs(blocks, config.feature_dim, enc);

  EncoderShape shape{config.feature_dim, config.d, enc ? enc->dim() : 0, config.normalize};
  Rng rng(config.seed);
  std::vector<double> idf;
  if (config.idf_init) idf = feature_idf(inputs, config.feature_dim);
  DualEncoder model = DualEncoder::initialize(shape, rng.next_u64(), config.idf_init ? &idf : nullptr);
  RowAdam adam_q(shape.feature_dim, shape.d, AdamConfig{config.learning_rate});
  RowAdam adam_b(shape.feature_dim + shape.r, shape.d, AdamConfig{config.learning_rate});

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  BatchGrad grad;
  std::vector<const TrainItem*> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&items[order[i]]);
      grad.wq.clear();
      grad.wb.clear();
      epoch_loss += batch_loss(model, batch, inputs, config.in_batch, &grad) *
                    static_cast<double>(batch.size());
      adam_q.begin_step();
      adam_b.begin_step();
      for (std::size_t k = 0; k < grad.wq.rows.size(); ++k) {
        adam_q.update_row(grad.wq.rows[k], model.wq_row(grad.wq.rows[k]),
                          std::span<const double>(grad.wq.data).subspan(k * shape.d, shape.d));
      }
      for (std::size_t k = 0; k < grad.wb.rows.size(); ++k) {
        adam_b.update_row(grad.wb.rows[k], model.wb_row(grad.wb.rows[k]),
                          std::span<const double>(grad.wb.data).subspan(k * shape.d, shape.d));
      }
    }
    rep.epoch_loss.push_back(epoch_loss / static_cast<double>(items.size()));
  }
  round_to_float(model.wq());
  round_to_float(model.wb());
  if (report) *report = std::move(rep);
  return model;
}

DenseIndex::DenseIndex(std::vector<std::string> ids, std::size_t d, std::vector<float> matrix)
    : ids_(std::move(ids)), d_(d), matrix_(std::move(matrix)) {
  if (matrix_.size() != ids_.size() * d_) throw Error("dense index: matrix size mismatch");
}

DenseIndex DenseIndex::build(const DualEncoder& model, const BlockStore& blocks,
                             const rate::RankEncoder* rank_encoder) {
  const auto& shape = model.shape();
  if (shape.r > 0 && (rank_encoder == nullptr || rank_encoder->dim() != shape.r)) {
    throw Error("dense index: model expects a rank encoder of dimension " + std::to_string(shape.r));
  }
  const auto inputs = block_inputs(blocks, shape.feature_dim, shape.r > 0 ? rank_encoder : nullptr);
  std::vector<std::string> ids;
  std::vector<float> matrix;
  matrix.reserve(blocks.size() * shape.d);
  for (std::size_t o = 0; o < blocks.size(); ++o) {
    ids.push_back(blocks[o].block_id);
    for (double v : model.encode_block_input(inputs[o])) matrix.push_back(static_cast<float>(v));
  }
  return DenseIndex(std::move(ids), shape.d, std::move(matrix));
}

std::vector<double> DenseIndex::scores(std::span<const double> query) const {
  if (query.size() != d_) throw Error("dense index: query dimension mismatch");
  std::vector<double> s(size());
  for (std::size_t i = 0; i < size(); ++i) {
    const float* row = matrix_.data() + i * d_;
    double acc = 0.0;
    for (std::size_t j = 0; j < d_; ++j) acc += static_cast<double>(row[j]) * query[j];
    s[i] = acc;
  }
  return s;
}

std::vector<ScoredBlock> DenseIndex::topk(std::span<const double> query, std::size_t k) const {
  if (k < 1) throw Error("dense_topk: k must be >= 1");
  if (ids_.empty()) throw Error("dense_topk: empty index");
  return select_topk(scores(query), k);
}

std::vector<ScoredBlock> dense_topk(const DenseIndex& index, std::span<const double> query,
                                    std::size_t k) {
  return index.topk(query, k);
}

// Layout: "DIDX" u32 version u32 N u32 d { str id }[N] f32 matrix[N*d]
std::string DenseIndex::serialize() const {
  BinaryWriter w;
  w.magic("DIDX");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(ids_.size()));
  w.u32(static_cast<std::uint32_t>(d_));
  for (const auto& id : ids_) w.str(id);
  for (float v : matrix_) w.f32(v);
  return w.bytes();
}

DenseIndex DenseIndex::deserialize(std::string bytes, const std::string& source) {
  BinaryReader rd(std::move(bytes), source);
  rd.expect_magic("DIDX");
  rd.expect_version(kFormatVersion);
  const std::uint32_t n = rd.u32();
  const std::uint32_t d = rd.u32();
  std::vector<std::string> ids(n);
  for (auto& id : ids) id = rd.str();
  std::vector<float> matrix(static_cast<std::size_t>(n) * d);
  for (auto& v : matrix) v = rd.f32();
  rd.expect_end();
  return DenseIndex(std::move(ids), d, std::move(matrix));
}

void DenseIndex::save(const std::string& path) const { write_file_atomic(path, serialize()); }

DenseIndex DenseIndex::load(const std::string& path) { return deserialize(read_file(path), path); }

}  // namespace tabret::retriever
