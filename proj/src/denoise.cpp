#include "tabret/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "tabret/binio.hpp"
#include "tabret/common.hpp"
#include "tabret/optim.hpp"

namespace tabret::denoise {

DatasetPartition partition_dataset(const std::vector<QAInstance>& instances) {
  DatasetPartition p;
  for (const auto& inst : instances) {
    switch (inst.answer_blocks.size()) {
      case 0: p.d0.push_back(inst); break;
      case 1: p.d1.push_back(inst); break;
      default: p.d2plus.push_back(inst); break;
    }
  }
  return p;
}

std::size_t mine_detector_negative(const QAInstance& instance, const Bm25Index& index) {
  std::vector<std::size_t> candidates;
  for (std::size_t o : instance.blocks) {
    if (std::find(instance.answer_blocks.begin(), instance.answer_blocks.end(), o) ==
        instance.answer_blocks.end()) {
      candidates.push_back(o);
    }
  }
  if (candidates.empty()) {
    throw NoNegativeAvailable("question " + instance.question_id +
                              ": every block of its table contains the answer");
  }
  std::sort(candidates.begin(), candidates.end());
  const auto scores = index.scores(instance.question);
  std::size_t best = candidates.front();
  for (std::size_t o : candidates) {
    if (scores[o] > scores[best]) best = o;
  }
  return best;
}

text::SparseVector pair_features(std::string_view question, std::string_view block_text,
                                 std::uint32_t dim) {
  const auto q = text::tokenize(question);
  const auto b = text::tokenize(block_text);
  std::vector<std::string> joined = q;
  joined.emplace_back("[sep]");
  joined.insert(joined.end(), b.begin(), b.end());
  text::SparseVector base = text::hash_features(joined, dim);

  std::unordered_set<std::string_view> in_block(b.begin(), b.end());
  std::vector<std::string_view> distinct_q;
  {
    std::unordered_set<std::string_view> seen;
    for (const auto& t : q) {
      if (seen.insert(t).second) distinct_q.push_back(t);
    }
  }
  std::vector<text::SparseEntry> raw = base.entries;
  if (!distinct_q.empty()) {
    const double w = 1.0 / std::sqrt(static_cast<double>(distinct_q.size()));
    for (auto t : distinct_q) {
      if (t.front() == '[' || !in_block.count(t)) continue;
      raw.push_back({static_cast<std::uint32_t>(hash64(t, kCrossSeed) & (dim - 1)), w});
      const std::string_view cls = text::is_numeric_token(t) ? "#number" : "#word";
      raw.push_back({static_cast<std::uint32_t>(hash64(cls, kCrossSeed) & (dim - 1)), w});
    }
  }
  return text::make_sparse(dim, std::move(raw));
}

double bce_loss(double s, int label) {
  const double c = std::clamp(s, kScoreClamp, 1.0 - kScoreClamp);
  return label == 1 ? -std::log(c) : -std::log(1.0 - c);
}

double LinearScorer::logit(const text::SparseVector& x) const {
  double z = bias;
  for (const auto& e : x.entries) z += weights[e.index] * e.weight;
  return z;
}

double pairs_loss(const LinearScorer& scorer, const std::vector<LabeledPair>& pairs,
                  std::vector<double>* grad_w, double* grad_b) {
  if (pairs.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(pairs.size());
  double total = 0.0;
  for (const auto& p : pairs) {
    const double s = scorer.score(p.features);
    total += bce_loss(s, p.label);
    if (grad_w == nullptr) continue;
    // d/dz of the clamped loss: s - y inside the clamp range, zero outside.
    const bool clamped = s < kScoreClamp || s > 1.0 - kScoreClamp;
    const double g = clamped ? 0.0 : (s - static_cast<double>(p.label)) * inv;
    for (const auto& e : p.features.entries) (*grad_w)[e.index] += g * e.weight;
    if (grad_b) *grad_b += g;
  }
  return total * inv;
}

double Detector::score(std::string_view question, const FusedBlock& block) const {
  if (!trained()) throw Error("detector is not trained");
  return scorer_.score(pair_features(question, block.linearized_text, dim_));
}

double detector_score(const Detector& detector, std::string_view question, const FusedBlock& block) {
  return detector.score(question, block);
}

// Layout: "FPDX" u32 version u32 dim f32 weights[dim] f32 bias
std::string Detector::serialize() const {
  if (!trained()) throw Error("cannot save an untrained detector");
  BinaryWriter w;
  w.magic("FPDX");
  w.u32(kFormatVersion);
  w.u32(dim_);
  w.f32_array(scorer_.weights);
  w.f32(static_cast<float>(scorer_.bias));
  return w.bytes();
}

Detector Detector::deserialize(std::string bytes, const std::string& source) {
  BinaryReader r(std::move(bytes), source);
  r.expect_magic("FPDX");
  r.expect_version(kFormatVersion);
  const std::uint32_t dim = r.u32();
  text::validate_feature_dim(dim);
  LinearScorer s;
  s.weights = r.f32_array(dim);
  s.bias = r.f32();
  r.expect_end();
  return Detector(dim, std::move(s));
}

void Detector::save(const std::string& path) const { write_file_atomic(path, serialize()); }

Detector Detector::load(const std::string& path) { return deserialize(read_file(path), path); }

std::vector<LabeledPair> detector_pairs(const std::vector<QAInstance>& d1, const BlockStore& blocks,
                                        const Bm25Index& index, std::uint32_t dim,
                                        std::size_t* skipped) {
  std::vector<LabeledPair> pairs;
  std::size_t skip = 0;
  for (const auto& inst : d1) {
    if (inst.answer_blocks.size() != 1) throw Error("detector_pairs: instance is not in D1");
    std::size_t negative;
    try {
      negative = mine_detector_negative(inst, index);
    } catch (const NoNegativeAvailable&) {
      ++skip;
      continue;
    }
    pairs.push_back({pair_features(inst.question, blocks[inst.answer_blocks[0]].linearized_text, dim), 1});
    pairs.push_back({pair_features(inst.question, blocks[negative].linearized_text, dim), 0});
  }
  if (skipped) *skipped = skip;
  return pairs;
}

Detector train_detector(const std::vector<QAInstance>& d1, const BlockStore& blocks,
                        const Bm25Index& index, const DetectorConfig& config,
                        DetectorTrainReport* report) {
  text::validate_feature_dim(config.feature_dim);
  if (config.epochs == 0 || config.batch == 0 || !(config.learning_rate > 0.0)) {
    throw Error("train_detector: invalid config");
  }
  DetectorTrainReport rep;
  const auto pairs = detector_pairs(d1, blocks, index, config.feature_dim, &rep.skipped_no_negative);
  rep.instances_used = pairs.size() / 2;
  if (rep.instances_used == 0) throw Error("train_detector: no usable D1 instances");
  if (rep.instances_used < config.min_instances) {
    throw Error("train_detector: need at least " + std::to_string(config.min_instances) +
                " usable D1 instances, got " + std::to_string(rep.instances_used));
  }

  LinearScorer scorer;
  scorer.weights.assign(config.feature_dim, 0.0);
  rep.initial_loss = pairs_loss(scorer, pairs, nullptr, nullptr);

  Rng rng(config.seed);
  DenseAdam adam(config.feature_dim + 1, AdamConfig{config.learning_rate});
  std::vector<double> params(config.feature_dim + 1, 0.0);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LabeledPair> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(pairs[order[i]]);
      std::vector<double> grad(config.feature_dim + 1, 0.0);
      double gb = 0.0;
      epoch_loss += pairs_loss(scorer, batch, &grad, &gb) * static_cast<double>(batch.size());
      grad[config.feature_dim] = gb;
      std::copy(scorer.weights.begin(), scorer.weights.end(), params.begin());
      params[config.feature_dim] = scorer.bias;
      adam.step(params, grad);
      std::copy(params.begin(), params.begin() + config.feature_dim, scorer.weights.begin());
      scorer.bias = params[config.feature_dim];
    }
    rep.epoch_loss.push_back(epoch_loss / static_cast<double>(pairs.size()));
  }
  round_to_float(scorer.weights);
  scorer.bias = round_to_float(scorer.bias);
  rep.final_loss = pairs_loss(scorer, pairs, nullptr, nullptr);
  if (report) *report = std::move(rep);
  return Detector(config.feature_dim, std::move(scorer));
}

std::vector<DenoisedInstance> denoise(const std::vector<QAInstance>& d2plus,
                                      const Detector& detector, const BlockStore& blocks) {
  std::vector<DenoisedInstance> out;
  out.reserve(d2plus.size());
  for (const auto& inst : d2plus) {
    if (inst.answer_blocks.empty()) throw Error("denoise: instance has no answer blocks");
    std::vector<std::size_t> cands = inst.answer_blocks;
    std::sort(cands.begin(), cands.end());
    std::size_t best = cands.front();
    double best_score = detector.score(inst.question, blocks[best]);
    for (std::size_t i = 1; i < cands.size(); ++i) {
      const double s = detector.score(inst.question, blocks[cands[i]]);
      if (s > best_score) {
        best = cands[i];
        best_score = s;
      }
    }
    out.push_back({inst, best, Provenance::d2plus_denoised, best_score});
  }
  return out;
}

DenoisedDataset denoise_dataset(const DatasetPartition& partition, const Detector& detector,
                                const BlockStore& blocks) {
  DenoisedDataset data;
  for (const auto& inst : partition.d1) {
    data.instances.push_back({inst, inst.answer_blocks.front(), Provenance::d1_kept, std::nullopt});
  }
  for (auto& d : denoise(partition.d2plus, detector, blocks)) data.instances.push_back(std::move(d));
  data.dropped_d0 = partition.d0.size();
  return data;
}

OracleAgreement oracle_agreement(const std::vector<DenoisedInstance>& instances) {
  OracleAgreement a;
  double sum = 0.0;
  for (const auto& d : instances) {
    if (d.provenance != Provenance::d2plus_denoised || !d.instance.oracle_block) continue;
    ++a.evaluated;
    if (d.chosen_block == *d.instance.oracle_block) ++a.agree;
    sum += 1.0 / static_cast<double>(d.instance.answer_blocks.size());
  }
  if (a.evaluated) a.random_pick = sum / static_cast<double>(a.evaluated);
  return a;
}

std::string provenance_name(Provenance p) {
  return p == Provenance::d1_kept ? "D1-kept" : "D2plus-denoised";
}

std::string denoised_records(const DenoisedDataset& data, const BlockStore& blocks) {
  std::string out;
  for (const auto& d : data.instances) {
    nlohmann::json j = {{"question_id", d.instance.question_id},
                        {"chosen_block", blocks[d.chosen_block].block_id},
                        {"provenance", provenance_name(d.provenance)},
                        {"score", d.score ? nlohmann::json(*d.score) : nlohmann::json(nullptr)}};
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

DenoisedDataset read_denoised(const std::string& path, const std::vector<QAInstance>& instances,
                              const BlockStore& blocks) {
  std::unordered_map<std::string, const QAInstance*> by_id;
  for (const auto& inst : instances) by_id.emplace(inst.question_id, &inst);
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  DenoisedDataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto qid = j.at("question_id").get<std::string>();
      auto it = by_id.find(qid);
      if (it == by_id.end()) throw Error("unknown question_id " + qid);
      DenoisedInstance d;
      d.instance = *it->second;
      d.chosen_block = blocks.ordinal(j.at("chosen_block").get<std::string>());
      const auto prov = j.at("provenance").get<std::string>();
      if (prov == "D1-kept") {
        d.provenance = Provenance::d1_kept;
      } else if (prov == "D2plus-denoised") {
        d.provenance = Provenance::d2plus_denoised;
      } else {
        throw Error("unknown provenance " + prov);
      }
      if (!j.at("score").is_null()) d.score = j.at("score").get<double>();
      data.instances.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return data;
}

}  // namespace tabret::denoise
