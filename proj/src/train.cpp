// Copyright (c) 2026 The docfield Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "docfield/train.hpp"

#include "docfield/parallel.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace docfield {

using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (!(base_lr > 0) || !(lr_decay > 0) || lr_period <= 0) {
    throw std::invalid_argument("learning rate schedule must be positive");
  }
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (model.bp_steps < 0) throw std::invalid_argument("bp_steps must be non-negative");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be non-negative");
  for (int h : model.hidden) {
    if (h <= 0) throw std::invalid_argument("hidden sizes must be positive");
  }
}

ordered_json to_json(const ModelConfig& c) {
  return {{"bp_steps", c.bp_steps},
          {"avg_before_attention", c.avg_before_attention},
          {"unary_source", std::string(to_string(c.unary_source))},
          {"hidden", c.hidden}};
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) ==
        keys.end()) {
      throw std::invalid_argument(std::string(what) + ": unknown key '" + k + "'");
    }
  }
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j, {"bp_steps", "avg_before_attention", "unary_source", "hidden"}, "model");
  ModelConfig c;
  c.bp_steps = j.value("bp_steps", c.bp_steps);
  c.avg_before_attention = j.value("avg_before_attention", c.avg_before_attention);
  if (j.contains("unary_source")) {
    c.unary_source = unary_source_from_string(j.at("unary_source").get<std::string>());
  }
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
  return c;
}

ordered_json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"iterations", c.iterations},
          {"base_lr", c.base_lr},
          {"lr_decay", c.lr_decay},
          {"lr_period", c.lr_period},
          {"momentum", c.momentum},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"model", to_json(c.model)}};
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j,
                 {"batch_size", "iterations", "base_lr", "lr_decay", "lr_period", "momentum",
                  "seed", "checkpoint_every", "model"},
                 "train config");
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.iterations = j.value("iterations", c.iterations);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.lr_period = j.value("lr_period", c.lr_period);
  c.momentum = j.value("momentum", c.momentum);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  return c;
}

namespace {

constexpr char kMagic[4] = {'D', 'F', 'C', 'K'};
constexpr std::uint64_t kSamplerStream = 0x5851f42d4c957f2dULL;

std::string engine_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 engine_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw CheckpointError("checkpoint: unreadable sampler state");
  return rng;
}

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void matrix(const Eigen::MatrixXd& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::size_t end) : data_(data), end_(end) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void matrix_into(Eigen::MatrixXd& m) {
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    if (rows != m.rows() || cols != m.cols()) {
      throw CheckpointError("checkpoint: tensor shape does not match the model config");
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
    }
  }
  bool done() const { return pos_ == end_; }

 private:
  unsigned char byte(std::size_t i) const { return static_cast<unsigned char>(data_[i]); }
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) throw CheckpointError("checkpoint: truncated payload");
  }
  const std::string& data_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(const std::string& s, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(n)));
}

}  // namespace

Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint ck;
  ck.config = cfg;
  ck.params = ModelParams::init(cfg.seed, cfg.model);
  ck.optimizer = make_optimizer_state(std::as_const(ck.params).tensors(), cfg.momentum);
  ck.iteration = 0;
  ck.rng_state = engine_state(std::mt19937_64(cfg.seed ^ kSamplerStream));
  return ck;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.str().append(kMagic, 4);
  w.u32(Checkpoint::kFormatVersion);
  w.bytes(to_json(ck.config).dump());
  w.u64(static_cast<std::uint64_t>(ck.iteration));
  w.u64(static_cast<std::uint64_t>(ck.optimizer.iteration));
  w.f64(ck.optimizer.momentum);
  w.bytes(ck.rng_state);
  const auto params = ck.params.tensors();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) w.matrix(*p);
  w.u32(static_cast<std::uint32_t>(ck.optimizer.velocity.size()));
  for (const auto& v : ck.optimizer.velocity) w.matrix(v);
  const std::uint32_t crc = checksum(w.str(), w.str().size());
  w.u32(crc);
  return std::move(w.str());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, kMagic, 4) != 0) {
    throw CheckpointError("checkpoint: not a docfield checkpoint");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) {
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[body + i])) << (8 * i);
  }
  if (stored != checksum(bytes, body)) throw CheckpointError("checkpoint: checksum mismatch");

  const std::string payload = bytes.substr(4, body - 4);
  Reader in(payload, payload.size());

  const std::uint32_t version = in.u32();
  if (version != Checkpoint::kFormatVersion) {
    throw CheckpointError("checkpoint: format version " + std::to_string(version) +
                          " is not supported");
  }
  Checkpoint ck;
  try {
    ck.config = train_config_from_json(json::parse(in.bytes()));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad config: ") + e.what());
  }
  ck.iteration = static_cast<std::int64_t>(in.u64());
  ck.params = ModelParams::init(0, ck.config.model);
  ck.optimizer = make_optimizer_state(std::as_const(ck.params).tensors(), ck.config.momentum);
  ck.optimizer.iteration = static_cast<std::int64_t>(in.u64());
  ck.optimizer.momentum = in.f64();
  ck.rng_state = in.bytes();
  engine_from_state(ck.rng_state);
  const auto params = ck.params.tensors();
  if (in.u32() != params.size()) throw CheckpointError("checkpoint: parameter count mismatch");
  for (auto* p : params) in.matrix_into(*p);
  if (in.u32() != ck.optimizer.velocity.size()) {
    throw CheckpointError("checkpoint: optimizer state mismatch");
  }
  for (auto& v : ck.optimizer.velocity) in.matrix_into(v);
  if (!in.done()) throw CheckpointError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

namespace {

std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)));
}

}  // namespace

std::vector<TrainingPair> sample_batch(std::span<const TypeGroup* const> types, int batch_size,
                                       std::mt19937_64& rng) {
  if (batch_size <= 0) throw std::invalid_argument("sample_batch: batch_size must be positive");
  if (types.size() < static_cast<std::size_t>(batch_size)) {
    throw std::invalid_argument("sample_batch: need at least " + std::to_string(batch_size) +
                                " template types, dataset has " + std::to_string(types.size()));
  }
  for (const TypeGroup* t : types) {
    if (t->documents.size() < 2) {
      throw std::invalid_argument("sample_batch: type '" + t->type_id +
                                  "' has fewer than 2 documents");
    }
  }
  std::vector<std::size_t> order(types.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<TrainingPair> batch;
  for (int b = 0; b < batch_size; ++b) {
    const std::size_t pick = b + draw_index(rng, order.size() - b);
    std::swap(order[b], order[pick]);
    const auto& docs = types[order[b]]->documents;
    const std::size_t s = draw_index(rng, docs.size());
    std::size_t q = draw_index(rng, docs.size() - 1);
    if (q >= s) ++q;
    batch.push_back({&docs[s], &docs[q]});
  }
  return batch;
}

namespace {

struct PairGradient {
  bool used = false;
  double loss = 0;
  MlpParams lf;
  MlpParams ff;
};

PairGradient pair_gradient(const TrainingPair& pair, const ModelParams& params) {
  PairGradient out;
  PairInputs in;
  try {
    in = prepare_pair(*pair.support, *pair.query);
  } catch (const NoCorrespondenceError&) {
    return out;
  }
  if (std::none_of(in.query.labels.begin(), in.query.labels.end(), [](int l) { return l >= 0; })) {
    return out;
  }
  ad::Tape tape;
  const MlpVars lf = place_on_tape(tape, params.lf_mlp, true);
  const MlpVars ff = place_on_tape(tape, params.ff_mlp, true);
  const ForwardVars fw = forward(tape, in, lf, ff, params.config);
  const ad::Var l = loss(fw.log_p_final, in.query.labels);
  tape.backward(l);
  out.used = true;
  out.loss = l.value()(0, 0);
  out.lf = gradients_of(lf);
  out.ff = gradients_of(ff);
  return out;
}

}  // namespace

TrainResult train(const DatasetManifest& ds, Checkpoint start, const TrainHooks& hooks) {
  start.config.validate();
  const TrainConfig& cfg = start.config;
  const std::vector<const TypeGroup*> types = ds.types_in("train");
  std::mt19937_64 rng = engine_from_state(start.rng_state);

  TrainResult result;
  Checkpoint& ck = start;
  while (ck.iteration < cfg.iterations) {
    const double lr = lr_at(ck.iteration, cfg.base_lr, cfg.lr_decay, cfg.lr_period);
    const std::vector<TrainingPair> batch = sample_batch(types, cfg.batch_size, rng);
    std::vector<PairGradient> grads(batch.size());
    parallel_for(batch.size(), hooks.threads,
                 [&](std::size_t i) { grads[i] = pair_gradient(batch[i], ck.params); });

    MlpParams lf_sum = ck.params.lf_mlp.zeros_like();
    MlpParams ff_sum = ck.params.ff_mlp.zeros_like();
    double loss_sum = 0;
    int used = 0;
    for (const PairGradient& g : grads) {
      if (!g.used) continue;
      ++used;
      loss_sum += g.loss;
      const auto dst_lf = lf_sum.tensors();
      const auto src_lf = g.lf.tensors();
      for (std::size_t t = 0; t < dst_lf.size(); ++t) *dst_lf[t] += *src_lf[t];
      const auto dst_ff = ff_sum.tensors();
      const auto src_ff = g.ff.tensors();
      for (std::size_t t = 0; t < dst_ff.size(); ++t) *dst_ff[t] += *src_ff[t];
    }

    LossRecord rec{ck.iteration, lr, 0.0};
    if (used > 0) {
      rec.loss = loss_sum / used;
      if (std::isnan(rec.loss)) {
        throw std::runtime_error("training diverged: loss is NaN at iteration " +
                                 std::to_string(ck.iteration));
      }
      std::vector<const Eigen::MatrixXd*> grad_ptrs;
      for (auto* t : lf_sum.tensors()) {
        *t /= used;
        grad_ptrs.push_back(t);
      }
      for (auto* t : ff_sum.tensors()) {
        *t /= used;
        grad_ptrs.push_back(t);
      }
      sgd_momentum_step(ck.params.tensors(), grad_ptrs, ck.optimizer, lr);
    } else {
      rec.loss = std::numeric_limits<double>::quiet_NaN();
    }
    ++ck.iteration;
    ck.rng_state = engine_state(rng);
    result.trace.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && ck.iteration % cfg.checkpoint_every == 0 &&
        ck.iteration < cfg.iterations) {
      hooks.on_checkpoint(ck);
    }
  }
  result.checkpoint = std::move(ck);
  return result;
}

TrainResult train(const DatasetManifest& ds, const TrainConfig& cfg, const TrainHooks& hooks) {
  return train(ds, initial_checkpoint(cfg), hooks);
}

void write_loss_csv(std::span<const LossRecord> trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iter,lr,loss\n";
  char line[96];
  for (const auto& r : trace) {
    std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g\n", static_cast<long long>(r.iteration),
                  r.lr, r.loss);
    out << line;
  }
}

}  // namespace docfield
