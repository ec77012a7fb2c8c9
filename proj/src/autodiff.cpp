#include "ecat/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ecat {

namespace {

thread_local bool g_grad_enabled = true;

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 operand, got " + to_string(t.shape()));
  }
}

void accumulate(Tensor& into, const Tensor& g) {
  if (into.empty()) {
    into = g;
    return;
  }
  auto dst = into.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// C = A * B
// Kernels are cloned for AVX2; they use separate multiplies and adds (no
// FMA), so every clone produces bitwise-identical results.
#define ECAT_KERNEL __attribute__((target_clones("avx2", "default")))

// C += A * B
ECAT_KERNEL void gemm_nn_raw(const double* __restrict pa, const double* __restrict pb, double* __restrict pc,
                             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  gemm_nn_raw(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
}

// C = A * B^T, via an explicit transpose so the inner loop stays contiguous.
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = b.cols(), n = b.rows();
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b(j, p);
  }
  gemm_nn_raw(a.data().data(), bt.data(), c.data().data(), a.rows(), k, n);
}

// C += A^T * B
ECAT_KERNEL void gemm_tn_raw(const double* __restrict pa, const double* __restrict pb, double* __restrict pc,
                             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = pb + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      double* crow = pc + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  gemm_tn_raw(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
}

struct Broadcast {
  std::size_t rows, cols;
};

Broadcast broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_rank2(a, op);
  require_rank2(b, op);
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  };
  return {dim(a.rows(), b.rows()), dim(a.cols(), b.cols())};
}

// Sums a broadcast gradient back down to `shape`.
Tensor reduce_to(const Tensor& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  Tensor out(shape);
  const std::size_t r = shape[0], c = shape[1];
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) {
      out(r == 1 ? 0 : i, c == 1 ? 0 : j) += g(i, j);
    }
  }
  return out;
}

template <class F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, Broadcast bs, F f) {
  Tensor out({bs.rows, bs.cols});
  const bool ar = a.rows() == 1, ac = a.cols() == 1, br = b.rows() == 1, bc = b.cols() == 1;
  for (std::size_t i = 0; i < bs.rows; ++i) {
    for (std::size_t j = 0; j < bs.cols; ++j) {
      out(i, j) = f(a(ar ? 0 : i, ac ? 0 : j), b(br ? 0 : i, bc ? 0 : j));
    }
  }
  return out;
}

template <class F, class DF>
Var unary(const char* op, const Var& a, F f, DF df_from_in_out) {
  require_rank2(a.value(), op);
  Tensor out = Tensor::zeros_like(a.value());
  auto src = a.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return Var::from_op(op, std::move(out), {a},
                      [df_from_in_out](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        const Tensor& in = self.parent_value(0);
                        Tensor d = Tensor::zeros_like(in);
                        for (std::size_t i = 0; i < d.size(); ++i) {
                          d[i] = g[i] * df_from_in_out(in[i], self.value[i]);
                        }
                        gi[0] = std::move(d);
                      });
}

}  // namespace

// ---------------------------------------------------------------------------
// Var

Var Var::constant(Tensor value) {
  auto n = std::make_shared<NodeImpl>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::parameter(Tensor value) {
  auto n = std::make_shared<NodeImpl>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

const Tensor& Var::value() const { return node_->value; }
const Tensor& Var::grad() const { return node_->grad; }
bool Var::has_grad() const { return !node_->grad.empty(); }
bool Var::requires_grad() const { return node_->requires_grad; }
bool Var::is_leaf() const { return node_->leaf; }
const char* Var::op_name() const { return node_->op; }

void Var::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.data().begin(), node_->grad.data().end(), 0.0);
}

void Var::drop_grad() { node_->grad = Tensor(); }

Tensor& Var::mutable_value() {
  if (!node_->leaf) throw ContractError("mutable_value() on interior node '" + std::string(node_->op) + "'");
  return node_->value;
}

Var Var::from_op(const char* op, Tensor value, std::vector<Var> parents, BackwardFn backward) {
  require_finite(value, std::string("output of ") + op);
  auto n = std::make_shared<NodeImpl>();
  n->value = std::move(value);
  n->op = op;
  n->leaf = false;
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.node_->requires_grad;
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(std::move(p.node_));
      n->backward = std::move(backward);
    }
  }
  return Var(std::move(n));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

const Tensor* GradientMap::find(const Var& v) const {
  auto it = grads_.find(v.id());
  return it == grads_.end() ? nullptr : &it->second;
}

GradientMap backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.value().shape()));
  }
  GradientMap result;
  if (!loss.requires_grad()) return result;

  // Iterative post-order DFS gives a topological order.
  std::vector<NodeImpl*> order;
  std::unordered_set<NodeImpl*> visited;
  std::vector<std::pair<NodeImpl*, std::size_t>> stack;
  stack.emplace_back(loss.node_.get(), 0);
  visited.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeImpl* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto& grads = result.grads_;
  grads[loss.node_.get()] = Tensor(loss.value().shape(), 1.0);
  std::vector<Tensor> grads_in;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeImpl* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    const Tensor& g = found->second;
    if (node->leaf) {
      accumulate(node->grad, g);
      continue;
    }
    grads_in.assign(node->parents.size(), Tensor());
    node->backward(*node, g, grads_in);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      if (!node->parents[i]->requires_grad || grads_in[i].empty()) continue;
      accumulate(grads[node->parents[i].get()], grads_in[i]);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()) +
                         " are not aligned");
  }
  Tensor out = Tensor::zeros(av.rows(), bv.cols());
  gemm_nn(av, bv, out);
  return Var::from_op("matmul", std::move(out), {a, b},
                      [](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        const Tensor& x = self.parent_value(0);
                        const Tensor& y = self.parent_value(1);
                        if (self.parent_needs_grad(0)) {
                          gi[0] = Tensor::zeros(x.rows(), x.cols());
                          gemm_nt(g, y, gi[0]);
                        }
                        if (self.parent_needs_grad(1)) {
                          gi[1] = Tensor::zeros(y.rows(), y.cols());
                          gemm_tn(x, g, gi[1]);
                        }
                      });
}

Var add(const Var& a, const Var& b) {
  auto bs = broadcast_shape(a.value(), b.value(), "add");
  Tensor out = broadcast_apply(a.value(), b.value(), bs, [](double x, double y) { return x + y; });
  return Var::from_op("add", std::move(out), {a, b},
                      [](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        for (std::size_t i = 0; i < 2; ++i) {
                          if (self.parent_needs_grad(i)) gi[i] = reduce_to(g, self.parent_value(i).shape());
                        }
                      });
}

Var sub(const Var& a, const Var& b) {
  auto bs = broadcast_shape(a.value(), b.value(), "sub");
  Tensor out = broadcast_apply(a.value(), b.value(), bs, [](double x, double y) { return x - y; });
  return Var::from_op("sub", std::move(out), {a, b},
                      [](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        if (self.parent_needs_grad(0)) gi[0] = reduce_to(g, self.parent_value(0).shape());
                        if (self.parent_needs_grad(1)) {
                          Tensor neg = g;
                          for (auto& v : neg.data()) v = -v;
                          gi[1] = reduce_to(neg, self.parent_value(1).shape());
                        }
                      });
}

Var mul(const Var& a, const Var& b) {
  auto bs = broadcast_shape(a.value(), b.value(), "mul");
  Tensor out = broadcast_apply(a.value(), b.value(), bs, [](double x, double y) { return x * y; });
  return Var::from_op("mul", std::move(out), {a, b},
                      [bs](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        const Tensor& x = self.parent_value(0);
                        const Tensor& y = self.parent_value(1);
                        auto times = [](double gv, double other) { return gv * other; };
                        if (self.parent_needs_grad(0)) {
                          gi[0] = reduce_to(broadcast_apply(g, y, bs, times), x.shape());
                        }
                        if (self.parent_needs_grad(1)) {
                          gi[1] = reduce_to(broadcast_apply(g, x, bs, times), y.shape());
                        }
                      });
}

Var scale(const Var& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Var divide(const Var& a, double denominator) {
  if (denominator == 0.0) throw ContractError("divide: zero denominator");
  require_rank2(a.value(), "divide");
  Tensor out = a.value();
  for (auto& v : out.data()) v = v / denominator;
  return Var::from_op("divide", std::move(out), {a},
                      [denominator](const NodeImpl&, const Tensor& g, std::vector<Tensor>& gi) {
                        Tensor d = g;
                        for (auto& v : d.data()) v = v / denominator;
                        gi[0] = std::move(d);
                      });
}

Var add_scalar(const Var& a, double c) {
  return unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank2(p.value(), "concat");
    if (p.value().rows() != rows) {
      throw DimensionError("concat: row counts differ (" + to_string(parts[0].value().shape()) + " vs " +
                           to_string(p.value().shape()) + ")");
    }
    cols += p.value().cols();
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy(v.row(i).begin(), v.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    }
    off += v.cols();
  }
  return Var::from_op("concat", std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                      [offsets](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        for (std::size_t k = 0; k < self.parents.size(); ++k) {
                          if (!self.parent_needs_grad(k)) continue;
                          const std::size_t c = self.parent_value(k).cols();
                          Tensor d = Tensor::zeros(g.rows(), c);
                          for (std::size_t i = 0; i < g.rows(); ++i) {
                            auto src = g.row(i).subspan(offsets[k], c);
                            std::copy(src.begin(), src.end(), d.row(i).begin());
                          }
                          gi[k] = std::move(d);
                        }
                      });
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return Var::from_op("sum", Tensor::scalar(s), {a},
                      [](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        gi[0] = Tensor(self.parent_value(0).shape(), g[0]);
                      });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean: empty operand");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return Var::from_op("mean", Tensor::scalar(s / n), {a},
                      [n](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        gi[0] = Tensor(self.parent_value(0).shape(), g[0] / n);
                      });
}

Var row_sum(const Var& a) {
  require_rank2(a.value(), "row_sum");
  const Tensor& v = a.value();
  Tensor out = Tensor::zeros(v.rows(), 1);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    double s = 0.0;
    for (double x : v.row(i)) s += x;
    out(i, 0) = s;
  }
  return Var::from_op("row_sum", std::move(out), {a},
                      [](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        const Tensor& in = self.parent_value(0);
                        Tensor d = Tensor::zeros_like(in);
                        for (std::size_t i = 0; i < in.rows(); ++i) {
                          for (auto& x : d.row(i)) x = g(i, 0);
                        }
                        gi[0] = std::move(d);
                      });
}

Var elementwise(ElementwiseKind kind, std::span<const Var> operands) {
  auto need = [&](std::size_t n, const char* op) {
    if (operands.size() != n) {
      throw DimensionError(std::string(op) + ": expected " + std::to_string(n) + " operands, got " +
                           std::to_string(operands.size()));
    }
  };
  switch (kind) {
    case ElementwiseKind::add:
      need(2, "add");
      return add(operands[0], operands[1]);
    case ElementwiseKind::mul:
      need(2, "mul");
      return mul(operands[0], operands[1]);
    case ElementwiseKind::relu:
      need(1, "relu");
      return relu(operands[0]);
    case ElementwiseKind::sigmoid:
      need(1, "sigmoid");
      return sigmoid(operands[0]);
    case ElementwiseKind::tanh:
      need(1, "tanh");
      return tanh(operands[0]);
    case ElementwiseKind::concat:
      return concat(operands);
    case ElementwiseKind::mean:
      need(1, "mean");
      return mean(operands[0]);
  }
  throw ContractError("elementwise: unknown kind");
}

Var gather_rows(const Var& table, std::span<const std::size_t> ids) {
  const Tensor& t = table.value();
  require_rank2(t, "gather_rows");
  const std::size_t d = t.cols();
  Tensor out = Tensor::zeros(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= t.rows()) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " outside table of shape " +
                           to_string(t.shape()));
    }
    auto src = t.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return Var::from_op("gather_rows", std::move(out), {table},
                      [idx = std::move(idx)](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        Tensor d = Tensor::zeros_like(self.parent_value(0));
                        for (std::size_t i = 0; i < idx.size(); ++i) {
                          auto dst = d.row(idx[i]);
                          auto src = g.row(i);
                          for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                        }
                        gi[0] = std::move(d);
                      });
}

Var target_attention(const Var& candidate, const Var& sequence, std::span<const std::uint8_t> mask,
                     std::size_t seq_len, const Var& default_bias) {
  const Tensor& c = candidate.value();
  const Tensor& s = sequence.value();
  const Tensor& bias = default_bias.value();
  require_rank2(c, "target_attention");
  require_rank2(s, "target_attention");
  require_rank2(bias, "target_attention");
  const std::size_t batch = c.rows(), d = c.cols();
  if (seq_len == 0 || s.rows() != batch * seq_len || s.cols() != d || mask.size() != s.rows() ||
      bias.rows() != 1 || bias.cols() != d) {
    throw DimensionError("target_attention: candidate " + to_string(c.shape()) + ", sequence " +
                         to_string(s.shape()) + ", bias " + to_string(bias.shape()) + ", seq_len " +
                         std::to_string(seq_len) + ", mask " + std::to_string(mask.size()));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  auto weights = std::make_shared<std::vector<double>>(batch * seq_len, 0.0);
  auto empty_row = std::make_shared<std::vector<std::uint8_t>>(batch, 0);
  Tensor out = Tensor::zeros(batch, d);
  for (std::size_t b = 0; b < batch; ++b) {
    double max_logit = -INFINITY;
    bool any = false;
    for (std::size_t j = 0; j < seq_len; ++j) {
      const std::size_t r = b * seq_len + j;
      if (!mask[r]) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += c(b, k) * s(r, k);
      (*weights)[r] = dot * inv_sqrt_d;
      max_logit = any ? std::max(max_logit, (*weights)[r]) : (*weights)[r];
      any = true;
    }
    if (!any) {
      (*empty_row)[b] = 1;
      std::copy(bias.row(0).begin(), bias.row(0).end(), out.row(b).begin());
      continue;
    }
    double z = 0.0;
    for (std::size_t j = 0; j < seq_len; ++j) {
      const std::size_t r = b * seq_len + j;
      if (!mask[r]) continue;
      (*weights)[r] = std::exp((*weights)[r] - max_logit);
      z += (*weights)[r];
    }
    for (std::size_t j = 0; j < seq_len; ++j) {
      const std::size_t r = b * seq_len + j;
      if (!mask[r]) continue;
      (*weights)[r] /= z;
      const double w = (*weights)[r];
      for (std::size_t k = 0; k < d; ++k) out(b, k) += w * s(r, k);
    }
  }
  std::vector<std::uint8_t> mask_copy(mask.begin(), mask.end());
  return Var::from_op(
      "target_attention", std::move(out), {candidate, sequence, default_bias},
      [weights, empty_row, mask_copy = std::move(mask_copy), seq_len, inv_sqrt_d](
          const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
        const Tensor& cv = self.parent_value(0);
        const Tensor& sv = self.parent_value(1);
        const std::size_t batch = cv.rows(), d = cv.cols();
        Tensor dc = Tensor::zeros(batch, d);
        Tensor ds = Tensor::zeros(sv.rows(), d);
        Tensor db = Tensor::zeros(1, d);
        std::vector<double> dlogit(seq_len);
        for (std::size_t b = 0; b < batch; ++b) {
          if ((*empty_row)[b]) {
            for (std::size_t k = 0; k < d; ++k) db(0, k) += g(b, k);
            continue;
          }
          double weighted = 0.0;
          for (std::size_t j = 0; j < seq_len; ++j) {
            const std::size_t r = b * seq_len + j;
            if (!mask_copy[r]) continue;
            const double w = (*weights)[r];
            double dw = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              dw += g(b, k) * sv(r, k);
              ds(r, k) += w * g(b, k);
            }
            dlogit[j] = dw;
            weighted += w * dw;
          }
          for (std::size_t j = 0; j < seq_len; ++j) {
            const std::size_t r = b * seq_len + j;
            if (!mask_copy[r]) continue;
            const double dl = (*weights)[r] * (dlogit[j] - weighted) * inv_sqrt_d;
            for (std::size_t k = 0; k < d; ++k) {
              dc(b, k) += dl * sv(r, k);
              ds(r, k) += dl * cv(b, k);
            }
          }
        }
        if (self.parent_needs_grad(0)) gi[0] = std::move(dc);
        if (self.parent_needs_grad(1)) gi[1] = std::move(ds);
        if (self.parent_needs_grad(2)) gi[2] = std::move(db);
      });
}

Var cosine_similarity(const Var& u, const Var& v) {
  const Tensor& a = u.value();
  const Tensor& b = v.value();
  require_rank2(a, "cosine_similarity");
  if (a.shape() != b.shape()) {
    throw DimensionError("cosine_similarity: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                         " differ");
  }
  const std::size_t rows = a.rows(), d = a.cols();
  auto norms = std::make_shared<std::vector<double>>(2 * rows);
  Tensor out = Tensor::zeros(rows, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      dot += a(i, k) * b(i, k);
      na += a(i, k) * a(i, k);
      nb += b(i, k) * b(i, k);
    }
    if (na == 0.0 || nb == 0.0) {
      throw DegenerateInputError("cosine_similarity: row " + std::to_string(i) + " has zero norm");
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    (*norms)[2 * i] = na;
    (*norms)[2 * i + 1] = nb;
    out(i, 0) = std::clamp(dot / (na * nb), -1.0, 1.0);
  }
  return Var::from_op("cosine_similarity", std::move(out), {u, v},
                      [norms](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        const Tensor& a = self.parent_value(0);
                        const Tensor& b = self.parent_value(1);
                        Tensor da = Tensor::zeros_like(a), db = Tensor::zeros_like(b);
                        for (std::size_t i = 0; i < a.rows(); ++i) {
                          const double na = (*norms)[2 * i], nb = (*norms)[2 * i + 1];
                          const double cs = self.value(i, 0);
                          for (std::size_t k = 0; k < a.cols(); ++k) {
                            da(i, k) = g(i, 0) * (b(i, k) / (na * nb) - cs * a(i, k) / (na * na));
                            db(i, k) = g(i, 0) * (a(i, k) / (na * nb) - cs * b(i, k) / (nb * nb));
                          }
                        }
                        if (self.parent_needs_grad(0)) gi[0] = std::move(da);
                        if (self.parent_needs_grad(1)) gi[1] = std::move(db);
                      });
}

Var binary_cross_entropy(const Var& p, std::span<const double> labels) {
  const Tensor& pv = p.value();
  require_rank2(pv, "binary_cross_entropy");
  if (pv.cols() != 1 || pv.rows() != labels.size()) {
    throw DimensionError("binary_cross_entropy: predictions " + to_string(pv.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  Tensor out = Tensor::zeros(pv.rows(), 1);
  for (std::size_t i = 0; i < pv.rows(); ++i) {
    const double raw = pv(i, 0);
    if (!(raw >= 0.0 && raw <= 1.0)) {
      throw ContractError("binary_cross_entropy: probability " + std::to_string(raw) + " at row " +
                          std::to_string(i) + " outside [0,1]");
    }
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) {
      throw ContractError("binary_cross_entropy: label " + std::to_string(y) + " is not 0 or 1");
    }
    const double q = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    out(i, 0) = -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
  }
  std::vector<double> ys(labels.begin(), labels.end());
  return Var::from_op("binary_cross_entropy", std::move(out), {p},
                      [ys = std::move(ys)](const NodeImpl& self, const Tensor& g, std::vector<Tensor>& gi) {
                        const Tensor& in = self.parent_value(0);
                        Tensor d = Tensor::zeros_like(in);
                        for (std::size_t i = 0; i < in.rows(); ++i) {
                          const double q = std::clamp(in(i, 0), kProbClamp, 1.0 - kProbClamp);
                          d(i, 0) = g(i, 0) * (-ys[i] / q + (1.0 - ys[i]) / (1.0 - q));
                        }
                        gi[0] = std::move(d);
                      });
}

Var stop_gradient(const Var& x) { return Var::constant(x.value()); }

double entropy_binary(double p) {
  auto term = [](double q) { return q <= 0.0 ? 0.0 : -q * std::log(q); };
  return term(p) + term(1.0 - p);
}

}  // namespace ecat
