#pragma once

// Parametric components: the CTR model used for both the target model T and
// the source model S, the adapter that maps T's sequence representation
// toward S's, the fusion gate, and the domain discriminator.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ecat/adagrad.hpp"
#include "ecat/autodiff.hpp"
#include "ecat/datagen.hpp"

namespace ecat {

struct ModelConfig {
  std::size_t embed_dim = 16;
  std::size_t adapter_hidden = 32;
  std::vector<std::size_t> mlp_hidden = {64, 32};
  std::size_t discriminator_hidden = 16;
  double embedding_init_std = 0.1;
  /// Initial gate bias; sigmoid(-4) ~ 0.018 keeps fusion nearly closed.
  double gate_init_bias = -4.0;

  void validate() const;
};

/// Domain-independent feature rows ([B, kPhiFeatures]). Only constructible
/// from records through phi_features(), so the discriminator cannot be fed
/// id or domain features by accident.
class PhiMatrix {
 public:
  PhiMatrix() = default;
  static PhiMatrix from_records(const World& world, std::span<const SampleRecord* const> records);
  const Tensor& values() const { return values_; }

 private:
  Tensor values_;
};

/// Model inputs for a batch of records, prepared once.
struct Batch {
  std::size_t size = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> user_ids;
  std::vector<std::size_t> item_ids;
  std::vector<std::size_t> seq_ids;  // size*seq_len; pad positions hold 0
  std::vector<std::uint8_t> seq_mask;
  Tensor numeric;  // [size, kNumericFeatures]
  PhiMatrix phi;
  std::vector<double> labels;
  std::vector<Domain> domains;
};

/// Throws DataError on an id outside the world's vocabulary.
Batch make_batch(const World& world, std::span<const SampleRecord* const> records);
Batch make_batch(const World& world, std::span<const SampleRecord> records);

/// Embedding and sequence-layer outputs of a CTR model for one batch.
struct Encoded {
  Var user_emb;  // [B, d]
  Var item_emb;  // [B, d]
  Var e_seq;     // [B, d]
};

/// Embedding tables, target-attention sequence layer and MLP tower:
///   prob = sigmoid(MLP(concat(user_emb, item_emb, e_seq, numeric)))
class CtrModel {
 public:
  CtrModel(std::size_t num_users, std::size_t num_items, std::size_t seq_len, const ModelConfig& config,
           std::uint64_t seed);
  CtrModel(const CtrModel&) = delete;
  CtrModel& operator=(const CtrModel&) = delete;
  CtrModel(CtrModel&&) = default;
  CtrModel& operator=(CtrModel&&) = default;

  /// Deep copy with fresh parameter leaves.
  CtrModel clone() const;

  Encoded encode(const Batch& batch) const;
  /// Classification and logit layers over a given sequence representation.
  Var head(const Encoded& enc, const Var& seq_repr, const Batch& batch) const;
  /// Convenience: head(encode(batch), e_seq).
  Var forward(const Batch& batch) const;

  ParamList parameters() const;
  /// "name:rowsxcols;..." over parameters() in order.
  std::string shape_signature() const;
  /// Copies every parameter value; throws ContractError on signature mismatch.
  void copy_values_from(const CtrModel& other);

  std::size_t num_users() const { return user_embedding.value().rows(); }
  std::size_t num_items() const { return item_embedding.value().rows(); }
  std::size_t embed_dim() const { return user_embedding.value().cols(); }
  std::size_t seq_len() const { return seq_len_; }

  Var user_embedding;
  Var item_embedding;
  Var seq_default_bias;
  std::vector<Var> mlp_weights;
  std::vector<Var> mlp_biases;
  Var logit_weight;
  Var logit_bias;

 private:
  CtrModel() = default;
  std::size_t seq_len_ = 0;
};

/// Target attention over a behaviour sequence: softmax over real positions of
/// candidate·seq/sqrt(d), weighted sum; all-pad rows yield `default_bias`.
Var sequence_encode(const Var& candidate, const Var& seq_embs, std::span<const std::uint8_t> mask,
                    std::size_t seq_len, const Var& default_bias);

/// T's probability, optionally with its sequence representation replaced.
Var forward_target(const CtrModel& target, const Batch& batch, const Var* fused_seq_override = nullptr);

struct SourceOutput {
  Tensor prob;   // [B,1]
  Tensor e_seq;  // [B,d]
};

/// Forward-only evaluation of S; builds no differentiation graph.
SourceOutput forward_source(const CtrModel& source, const Batch& batch);

/// H(p) of T's fusion-free prediction per row, gradient-stopped.
std::vector<double> entropy_of_target(const Tensor& fusion_free_prob);

class Adapter {
 public:
  Adapter(std::size_t dim, std::size_t hidden, std::uint64_t seed);
  /// tanh hidden layer, linear output. The input is cut from its graph, so
  /// gradients through the output never reach whatever produced `e_seq_t`.
  Var forward(const Var& e_seq_t) const;
  ParamList parameters() const;

  Var w1, b1, w2, b2;
};

struct GateOutput {
  Var fused;  // [B,d]
  Var gate;   // [B,1]
};

class Gate {
 public:
  Gate(std::size_t dim, double init_bias, std::uint64_t seed);
  /// g = sigmoid([e'; stop(e_t); H] w + b); fused = g e' + (1-g) e_t.
  /// Supervision reaches the backbone only through the (1-g) e_t term.
  GateOutput fuse(const Var& adapted, const Var& e_seq_t, std::span<const double> entropy) const;
  ParamList parameters() const;

  Var w, b;
};

/// fused = mix e' + (1-mix) e_t with a constant mix.
Var fixed_fuse(const Var& adapted, const Var& e_seq_t, double mix);

/// (1 - cos(e', e_s)) / 2 per row, as constants. Throws DegenerateInputError
/// on zero-norm rows.
std::vector<double> distill_intensity(const Tensor& adapted, const Tensor& e_seq_s);

class Discriminator {
 public:
  Discriminator(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);
  /// Probability that each row comes from the target domain. Takes the
  /// domain-independent feature matrix only.
  Var forward(const PhiMatrix& phi) const;
  ParamList parameters() const;

  Var w1, b1, w2, b2;
};

// Checkpoints: text header (version, signature, seed, window, block count),
// then one "block <name> <rows> <cols>" line per parameter followed by a line
// of shortest round-trip decimal values.
inline constexpr const char* kCheckpointVersion = "ecat-checkpoint v1";

struct CheckpointHeader {
  std::string signature;
  std::uint64_t seed = 0;
  std::uint32_t window = 0;
};

std::string shape_signature(const ParamList& params);
void save_checkpoint(std::ostream& out, const ParamList& params, std::uint64_t seed, std::uint32_t window);
/// Loads into `params`; rejects a shape-signature mismatch with DataError.
CheckpointHeader load_checkpoint(std::istream& in, const ParamList& params);

}  // namespace ecat
