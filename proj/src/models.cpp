#include "ecat/models.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace ecat {

namespace {

constexpr std::uint64_t kTagCtr = 0x435452ULL;
constexpr std::uint64_t kTagAdapter = 0x414450ULL;
constexpr std::uint64_t kTagGate = 0x474154ULL;
constexpr std::uint64_t kTagDisc = 0x444953ULL;

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t = Tensor::zeros(fan_in, fan_out);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t = Tensor::zeros(rows, cols);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Var dense(const Var& x, const Var& w, const Var& b) { return add(matmul(x, w), b); }

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim == 0 || adapter_hidden == 0 || discriminator_hidden == 0) {
    throw ConfigError("model: embed_dim, adapter_hidden, discriminator_hidden must be > 0");
  }
  for (auto h : mlp_hidden) {
    if (h == 0) throw ConfigError("model: mlp_hidden entries must be > 0");
  }
  if (!(embedding_init_std > 0.0) || !std::isfinite(gate_init_bias)) {
    throw ConfigError("model: embedding_init_std must be > 0 and gate_init_bias finite");
  }
}

// ---------------------------------------------------------------------------
// Batches

PhiMatrix PhiMatrix::from_records(const World& world, std::span<const SampleRecord* const> records) {
  PhiMatrix m;
  m.values_ = Tensor::zeros(records.size(), kPhiFeatures);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto phi = phi_features(world, *records[i]);
    std::copy(phi.begin(), phi.end(), m.values_.row(i).begin());
  }
  return m;
}

Batch make_batch(const World& world, std::span<const SampleRecord* const> records) {
  const std::size_t n = records.size();
  const std::size_t seq_len = world.config.seq_len;
  Batch b;
  b.size = n;
  b.seq_len = seq_len;
  b.user_ids.reserve(n);
  b.item_ids.reserve(n);
  b.seq_ids.assign(n * seq_len, 0);
  b.seq_mask.assign(n * seq_len, 0);
  b.numeric = Tensor::zeros(n, kNumericFeatures);
  b.labels.reserve(n);
  b.domains.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SampleRecord& r = *records[i];
    if (r.user_id >= world.config.num_users || r.item_id >= world.config.num_items) {
      throw DataError("record (" + std::to_string(r.user_id) + ", " + std::to_string(r.item_id) +
                      ") is outside the vocabulary");
    }
    if (r.behavior_seq.size() != seq_len) {
      throw DataError("behaviour sequence of length " + std::to_string(r.behavior_seq.size()) + ", expected " +
                      std::to_string(seq_len));
    }
    b.user_ids.push_back(r.user_id);
    b.item_ids.push_back(r.item_id);
    for (std::size_t j = 0; j < seq_len; ++j) {
      const auto id = r.behavior_seq[j];
      if (id == kPadItem) continue;
      if (id < 0 || static_cast<std::size_t>(id) >= world.config.num_items) {
        throw DataError("behaviour sequence item " + std::to_string(id) + " is outside the vocabulary");
      }
      b.seq_ids[i * seq_len + j] = static_cast<std::size_t>(id);
      b.seq_mask[i * seq_len + j] = 1;
    }
    std::copy(r.numeric.begin(), r.numeric.end(), b.numeric.row(i).begin());
    b.labels.push_back(static_cast<double>(r.label));
    b.domains.push_back(r.domain);
  }
  b.phi = PhiMatrix::from_records(world, records);
  return b;
}

Batch make_batch(const World& world, std::span<const SampleRecord> records) {
  std::vector<const SampleRecord*> ptrs;
  ptrs.reserve(records.size());
  for (const auto& r : records) ptrs.push_back(&r);
  return make_batch(world, ptrs);
}

// ---------------------------------------------------------------------------
// CTR model

CtrModel::CtrModel(std::size_t num_users, std::size_t num_items, std::size_t seq_len, const ModelConfig& config,
                   std::uint64_t seed)
    : seq_len_(seq_len) {
  config.validate();
  std::mt19937_64 rng(stream_seed(seed, kTagCtr, 0));
  const std::size_t d = config.embed_dim;
  user_embedding = Var::parameter(gaussian(num_users, d, config.embedding_init_std, rng));
  item_embedding = Var::parameter(gaussian(num_items, d, config.embedding_init_std, rng));
  seq_default_bias = Var::parameter(Tensor::zeros(1, d));
  std::size_t in = 3 * d + kNumericFeatures;
  for (auto h : config.mlp_hidden) {
    mlp_weights.push_back(Var::parameter(glorot(in, h, rng)));
    mlp_biases.push_back(Var::parameter(Tensor::zeros(1, h)));
    in = h;
  }
  logit_weight = Var::parameter(glorot(in, 1, rng));
  logit_bias = Var::parameter(Tensor::zeros(1, 1));
}

CtrModel CtrModel::clone() const {
  CtrModel c;
  c.seq_len_ = seq_len_;
  auto fresh = [](const Var& v) { return Var::parameter(v.value()); };
  c.user_embedding = fresh(user_embedding);
  c.item_embedding = fresh(item_embedding);
  c.seq_default_bias = fresh(seq_default_bias);
  for (const auto& w : mlp_weights) c.mlp_weights.push_back(fresh(w));
  for (const auto& b : mlp_biases) c.mlp_biases.push_back(fresh(b));
  c.logit_weight = fresh(logit_weight);
  c.logit_bias = fresh(logit_bias);
  return c;
}

Encoded CtrModel::encode(const Batch& batch) const {
  if (batch.seq_len != seq_len_) throw DimensionError("batch sequence length does not match the model");
  for (auto u : batch.user_ids) {
    if (u >= num_users()) throw DataError("user id " + std::to_string(u) + " is out of vocabulary");
  }
  for (auto i : batch.item_ids) {
    if (i >= num_items()) throw DataError("item id " + std::to_string(i) + " is out of vocabulary");
  }
  Encoded enc;
  enc.user_emb = gather_rows(user_embedding, batch.user_ids);
  enc.item_emb = gather_rows(item_embedding, batch.item_ids);
  Var seq = gather_rows(item_embedding, batch.seq_ids);
  enc.e_seq = sequence_encode(enc.item_emb, seq, batch.seq_mask, seq_len_, seq_default_bias);
  return enc;
}

Var CtrModel::head(const Encoded& enc, const Var& seq_repr, const Batch& batch) const {
  Var x = concat({enc.user_emb, enc.item_emb, seq_repr, Var::constant(batch.numeric)});
  for (std::size_t k = 0; k < mlp_weights.size(); ++k) x = relu(dense(x, mlp_weights[k], mlp_biases[k]));
  return sigmoid(dense(x, logit_weight, logit_bias));
}

Var CtrModel::forward(const Batch& batch) const {
  Encoded enc = encode(batch);
  return head(enc, enc.e_seq, batch);
}

ParamList CtrModel::parameters() const {
  ParamList p;
  p.push_back({"user_embedding", user_embedding});
  p.push_back({"item_embedding", item_embedding});
  p.push_back({"seq_default_bias", seq_default_bias});
  for (std::size_t k = 0; k < mlp_weights.size(); ++k) {
    p.push_back({"mlp" + std::to_string(k) + ".w", mlp_weights[k]});
    p.push_back({"mlp" + std::to_string(k) + ".b", mlp_biases[k]});
  }
  p.push_back({"logit.w", logit_weight});
  p.push_back({"logit.b", logit_bias});
  return p;
}

std::string CtrModel::shape_signature() const { return ecat::shape_signature(parameters()); }

void CtrModel::copy_values_from(const CtrModel& other) {
  if (shape_signature() != other.shape_signature() || seq_len_ != other.seq_len_) {
    throw ContractError("shape signature mismatch: " + shape_signature() + " vs " + other.shape_signature());
  }
  auto mine = parameters();
  auto theirs = other.parameters();
  for (std::size_t k = 0; k < mine.size(); ++k) mine[k].var.mutable_value() = theirs[k].var.value();
}

Var sequence_encode(const Var& candidate, const Var& seq_embs, std::span<const std::uint8_t> mask,
                    std::size_t seq_len, const Var& default_bias) {
  return target_attention(candidate, seq_embs, mask, seq_len, default_bias);
}

Var forward_target(const CtrModel& target, const Batch& batch, const Var* fused_seq_override) {
  Encoded enc = target.encode(batch);
  return target.head(enc, fused_seq_override ? *fused_seq_override : enc.e_seq, batch);
}

SourceOutput forward_source(const CtrModel& source, const Batch& batch) {
  NoGradGuard no_grad;
  Encoded enc = source.encode(batch);
  Var prob = source.head(enc, enc.e_seq, batch);
  return {prob.value(), enc.e_seq.value()};
}

std::vector<double> entropy_of_target(const Tensor& fusion_free_prob) {
  std::vector<double> h(fusion_free_prob.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i] = entropy_binary(std::clamp(fusion_free_prob[i], kProbClamp, 1.0 - kProbClamp));
  }
  return h;
}

// ---------------------------------------------------------------------------
// Adapter, gate, intensity, discriminator

Adapter::Adapter(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(stream_seed(seed, kTagAdapter, 0));
  w1 = Var::parameter(glorot(dim, hidden, rng));
  b1 = Var::parameter(Tensor::zeros(1, hidden));
  w2 = Var::parameter(glorot(hidden, dim, rng));
  b2 = Var::parameter(Tensor::zeros(1, dim));
}

Var Adapter::forward(const Var& e_seq_t) const {
  Var x = stop_gradient(e_seq_t);
  return dense(tanh(dense(x, w1, b1)), w2, b2);
}

ParamList Adapter::parameters() const {
  return {{"adapter.w1", w1}, {"adapter.b1", b1}, {"adapter.w2", w2}, {"adapter.b2", b2}};
}

Gate::Gate(std::size_t dim, double init_bias, std::uint64_t seed) {
  std::mt19937_64 rng(stream_seed(seed, kTagGate, 0));
  w = Var::parameter(glorot(2 * dim + 1, 1, rng));
  b = Var::parameter(Tensor::scalar(init_bias));
}

GateOutput Gate::fuse(const Var& adapted, const Var& e_seq_t, std::span<const double> entropy) const {
  const std::size_t rows = e_seq_t.value().rows();
  if (adapted.value().shape() != e_seq_t.value().shape() || entropy.size() != rows) {
    throw DimensionError("gate: adapted " + to_string(adapted.value().shape()) + ", e_seq " +
                         to_string(e_seq_t.value().shape()) + ", " + std::to_string(entropy.size()) +
                         " entropies");
  }
  Var h = Var::constant(Tensor({rows, 1}, std::vector<double>(entropy.begin(), entropy.end())));
  Var g = sigmoid(dense(concat({adapted, stop_gradient(e_seq_t), h}), w, b));
  Var fused = add(mul(g, adapted), mul(add_scalar(scale(g, -1.0), 1.0), e_seq_t));
  return {fused, g};
}

ParamList Gate::parameters() const { return {{"gate.w", w}, {"gate.b", b}}; }

Var fixed_fuse(const Var& adapted, const Var& e_seq_t, double mix) {
  return add(scale(adapted, mix), scale(e_seq_t, 1.0 - mix));
}

std::vector<double> distill_intensity(const Tensor& adapted, const Tensor& e_seq_s) {
  NoGradGuard no_grad;
  Var cos = cosine_similarity(Var::constant(adapted), Var::constant(e_seq_s));
  std::vector<double> w(cos.value().size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (1.0 - cos.value()[i]) / 2.0;
  return w;
}

Discriminator::Discriminator(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(stream_seed(seed, kTagDisc, 0));
  w1 = Var::parameter(glorot(input_dim, hidden, rng));
  b1 = Var::parameter(Tensor::zeros(1, hidden));
  w2 = Var::parameter(glorot(hidden, 1, rng));
  b2 = Var::parameter(Tensor::zeros(1, 1));
}

Var Discriminator::forward(const PhiMatrix& phi) const {
  Var x = Var::constant(phi.values());
  return sigmoid(dense(relu(dense(x, w1, b1)), w2, b2));
}

ParamList Discriminator::parameters() const {
  return {{"disc.w1", w1}, {"disc.b1", b1}, {"disc.w2", w2}, {"disc.b2", b2}};
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string shape_signature(const ParamList& params) {
  std::string s;
  for (const auto& p : params) {
    s += p.name + ":" + std::to_string(p.var.value().rows()) + "x" + std::to_string(p.var.value().cols()) + ";";
  }
  return s;
}

void save_checkpoint(std::ostream& out, const ParamList& params, std::uint64_t seed, std::uint32_t window) {
  out << kCheckpointVersion << '\n'
      << "signature " << shape_signature(params) << '\n'
      << "seed " << seed << '\n'
      << "window " << window << '\n'
      << "blocks " << params.size() << '\n';
  char buf[64];
  for (const auto& p : params) {
    const Tensor& v = p.var.value();
    out << "block " << p.name << ' ' << v.rows() << ' ' << v.cols() << '\n';
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto res = std::to_chars(buf, buf + sizeof(buf), v[i]);
      if (i) out << ' ';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing checkpoint");
}

CheckpointHeader load_checkpoint(std::istream& in, const ParamList& params) {
  auto read_line = [&](const char* what) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(std::string("checkpoint truncated before ") + what);
    return line;
  };
  auto field = [&](const char* key) {
    std::string line = read_line(key);
    const std::string prefix = std::string(key) + " ";
    if (line.rfind(prefix, 0) != 0) throw DataError("checkpoint: expected '" + prefix + "', got '" + line + "'");
    return line.substr(prefix.size());
  };
  if (read_line("version") != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
  CheckpointHeader h;
  h.signature = field("signature");
  if (h.signature != shape_signature(params)) {
    throw DataError("checkpoint shape signature '" + h.signature + "' does not match '" + shape_signature(params) +
                    "'");
  }
  h.seed = std::stoull(field("seed"));
  h.window = static_cast<std::uint32_t>(std::stoul(field("window")));
  if (std::stoull(field("blocks")) != params.size()) throw DataError("checkpoint: block count mismatch");

  std::vector<Tensor> loaded;
  for (const auto& p : params) {
    std::istringstream header(field("block"));
    std::string name;
    std::size_t rows = 0, cols = 0;
    header >> name >> rows >> cols;
    if (name != p.name || rows != p.var.value().rows() || cols != p.var.value().cols()) {
      throw DataError("checkpoint: unexpected block '" + name + "'");
    }
    std::string values = read_line("values");
    Tensor t = Tensor::zeros(rows, cols);
    const char* cur = values.data();
    const char* end = values.data() + values.size();
    for (std::size_t i = 0; i < t.size(); ++i) {
      while (cur < end && *cur == ' ') ++cur;
      auto res = std::from_chars(cur, end, t[i]);
      if (res.ec != std::errc()) throw DataError("checkpoint: malformed value in block '" + name + "'");
      cur = res.ptr;
    }
    loaded.push_back(std::move(t));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Var v = params[k].var;
    v.mutable_value() = std::move(loaded[k]);
  }
  return h;
}

}  // namespace ecat
