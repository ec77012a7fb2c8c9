#pragma once

// Reverse-mode automatic differentiation over rank-2 tensors.
//
// A Var is a handle to a node of a differentiation graph. Leaves created by
// Var::parameter() accumulate gradients across backward() calls until
// zero_grad(); interior nodes only hold gradients inside the GradientMap
// returned by a single backward() call. A graph belongs to one thread.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ecat/tensor.hpp"

namespace ecat {

struct NodeImpl;
class Var;
class GradientMap;
GradientMap backward(const Var& loss);

class Var {
 public:
  Var() = default;

  /// Leaf that never receives gradient.
  static Var constant(Tensor value);
  /// Leaf that accumulates gradient.
  static Var parameter(Tensor value);

  const Tensor& value() const;
  /// Accumulated leaf gradient; empty until the first contribution arrives.
  const Tensor& grad() const;
  bool has_grad() const;
  bool requires_grad() const;
  bool is_leaf() const;
  const char* op_name() const;

  void zero_grad();
  /// Clears the stored gradient entirely (back to the lazily-zero state).
  void drop_grad();
  /// Direct access for optimizers and checkpoint loading. Leaves only.
  Tensor& mutable_value();

  const NodeImpl* id() const { return node_.get(); }
  explicit operator bool() const { return node_ != nullptr; }

  // Graph construction hook for op implementations.
  using BackwardFn = std::function<void(const NodeImpl& self, const Tensor& grad_out, std::vector<Tensor>& grads_in)>;
  static Var from_op(const char* op, Tensor value, std::vector<Var> parents, BackwardFn backward);

 private:
  explicit Var(std::shared_ptr<NodeImpl> node) : node_(std::move(node)) {}
  std::shared_ptr<NodeImpl> node_;

  friend class GradientMap;
  friend GradientMap backward(const Var& loss);
};

struct NodeImpl {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<NodeImpl>> parents;
  Var::BackwardFn backward;

  const Tensor& parent_value(std::size_t i) const { return parents[i]->value; }
  bool parent_needs_grad(std::size_t i) const { return parents[i]->requires_grad; }
};

/// While alive, ops record no parents: outputs are constants.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// dLoss/dNode for every node reached by one backward() call.
class GradientMap {
 public:
  /// Gradient of `v` from this pass, or nullptr when `v` was not reached.
  const Tensor* find(const Var& v) const;
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const NodeImpl*, Tensor> grads_;
  friend GradientMap backward(const Var& loss);
};

/// Propagates from a scalar loss. Leaf parameters accumulate into grad().
GradientMap backward(const Var& loss);

// ---------------------------------------------------------------------------
// Operations. Binary elementwise ops broadcast rank-2 operands along any
// dimension of size 1 ([m,n] with [1,n], [m,1] or [1,1]).

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double c);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
/// Concatenates along the last axis; all operands share the row count.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
/// Mean over all elements, shape [1,1].
Var mean(const Var& a);
/// Sum over all elements, shape [1,1].
Var sum(const Var& a);
/// Rowwise sum, shape [m,1].
Var row_sum(const Var& a);
/// Divides every element by a constant; kept separate from scale() so that
/// a mean written as sum/n rounds exactly like the plain division.
Var divide(const Var& a, double denominator);

enum class ElementwiseKind { add, mul, relu, sigmoid, tanh, concat, mean };
Var elementwise(ElementwiseKind kind, std::span<const Var> operands);

/// Row lookup into an embedding table; backward scatter-adds.
Var gather_rows(const Var& table, std::span<const std::size_t> ids);

/// Scaled dot-product target attention. `candidate` is [B,d], `sequence` is
/// [B*L,d] (row b*L+j is position j of example b), `mask[b*L+j]` is nonzero
/// for real positions. Weights are a softmax over real positions of
/// candidate·seq/sqrt(d). Rows with no real positions return `default_bias`
/// ([1,d]).
Var target_attention(const Var& candidate, const Var& sequence, std::span<const std::uint8_t> mask,
                     std::size_t seq_len, const Var& default_bias);

/// Rowwise cosine similarity of two [B,d] operands, shape [B,1]. Throws
/// DegenerateInputError on a zero-norm row.
Var cosine_similarity(const Var& u, const Var& v);

/// Probability clamp applied before any log.
inline constexpr double kProbClamp = 1e-7;

/// Rowwise -[y ln p + (1-y) ln(1-p)] with p clamped to [1e-7, 1-1e-7].
/// `p` is [B,1]. The gradient is evaluated at the clamped probability.
Var binary_cross_entropy(const Var& p, std::span<const double> labels);

/// Identical value, no gradient path to `x`.
Var stop_gradient(const Var& x);

/// -p ln p - (1-p) ln(1-p), with 0 ln 0 = 0.
double entropy_binary(double p);

}  // namespace ecat
