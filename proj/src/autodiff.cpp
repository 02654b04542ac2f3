#include "plvo/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace plvo::ad {

namespace detail {

double perm_sum(const double* values, int n) {
  thread_local std::vector<double> scratch;
  scratch.assign(values, values + n);
  std::sort(scratch.begin(), scratch.end());
  double acc = 0.0;
  for (double x : scratch) acc += x;
  return acc;
}

// Inner product over k with order-invariant accumulation.
double perm_dot(const double* a, int stride_a, const double* b, int stride_b,
                int k) {
  thread_local std::vector<double> prods;
  prods.resize(k);
  for (int i = 0; i < k; ++i) prods[i] = a[i * stride_a] * b[i * stride_b];
  return perm_sum(prods.data(), k);
}

double logsumexp(const double* values, int n, int stride) {
  double hi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) hi = std::max(hi, values[i * stride]);
  if (!std::isfinite(hi)) return hi;  // all -inf (or empty row of +inf)
  thread_local std::vector<double> exps;
  exps.resize(n);
  for (int i = 0; i < n; ++i) exps[i] = std::exp(values[i * stride] - hi);
  return hi + std::log(perm_sum(exps.data(), n));
}

}  // namespace detail

Tensor Tensor::full(int r, int c, double value) {
  Tensor t(r, c);
  std::fill(t.v.begin(), t.v.end(), value);
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t(1, 1);
  t.v[0] = value;
  return t;
}

Tensor Tensor::randn(int r, int c, Rng& rng, double stddev) {
  Tensor t(r, c);
  for (double& x : t.v) x = stddev * rng.normal();
  return t;
}

Tensor Tensor::xavier(int fan_in, int fan_out, Rng& rng, double gain) {
  Tensor t(fan_in, fan_out);
  const double bound = gain * std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : t.v) x = rng.uniform(-bound, bound);
  return t;
}

std::string Tensor::shape_str() const {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeMismatch(std::string(op) + ": " + a.shape_str() + " vs " +
                        b.shape_str());
}

}  // namespace

NodeId Tape::push(Node node) {
  grads_valid_ = false;
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

int Tape::check(NodeId id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw IndexOutOfRange("Tape: bad node id " + std::to_string(id));
  return id;
}

NodeId Tape::input(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw Error("Tape::input: non-finite tensor");
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_same_shape(va, vb, "add");
  Node n{Op::Add, a, b, va};
  for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] += vb.v[i];
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_same_shape(va, vb, "sub");
  Node n{Op::Sub, a, b, va};
  for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] -= vb.v[i];
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_same_shape(va, vb, "mul");
  Node n{Op::Mul, a, b, va};
  for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] *= vb.v[i];
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double s) {
  Node n{Op::Scale, a, -1, value(a)};
  n.scalar = s;
  for (double& x : n.val.v) x *= s;
  return push(std::move(n));
}

namespace {

/// out += A * B with a fixed k-order accumulation per entry: the result of
/// each row depends only on that row of A, so row permutations of A (and
/// column permutations of B) permute the output bit-exactly.
void gemm_accumulate(const Tensor& a, const Tensor& b, Tensor& out) {
  for (int i = 0; i < a.rows; ++i) {
    double* __restrict out_row = &out.v[static_cast<size_t>(i) * out.cols];
    const double* a_row = &a.v[static_cast<size_t>(i) * a.cols];
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a_row[k];
      const double* __restrict b_row = &b.v[static_cast<size_t>(k) * b.cols];
      for (int j = 0; j < b.cols; ++j) out_row[j] += aik * b_row[j];
    }
  }
}

// out += A^T * B
void gemm_at_b(const Tensor& a, const Tensor& b, Tensor& out) {
  for (int i = 0; i < a.rows; ++i) {
    const double* a_row = &a.v[static_cast<size_t>(i) * a.cols];
    const double* __restrict b_row = &b.v[static_cast<size_t>(i) * b.cols];
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a_row[k];
      double* __restrict out_row = &out.v[static_cast<size_t>(k) * out.cols];
      for (int j = 0; j < b.cols; ++j) out_row[j] += aik * b_row[j];
    }
  }
}

// out += A * B^T
void gemm_a_bt(const Tensor& a, const Tensor& b, Tensor& out) {
  for (int i = 0; i < a.rows; ++i) {
    const double* a_row = &a.v[static_cast<size_t>(i) * a.cols];
    double* out_row = &out.v[static_cast<size_t>(i) * out.cols];
    for (int j = 0; j < b.rows; ++j) {
      const double* b_row = &b.v[static_cast<size_t>(j) * b.cols];
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += a_row[k] * b_row[k];
      out_row[j] += acc;
    }
  }
}

}  // namespace

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.cols != vb.rows)
    throw ShapeMismatch("matmul: " + va.shape_str() + " x " + vb.shape_str());
  Node n{Op::MatMul, a, b, Tensor(va.rows, vb.cols)};
  gemm_accumulate(va, vb, n.val);
  return push(std::move(n));
}

NodeId Tape::matmul_keysum(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.cols != vb.rows)
    throw ShapeMismatch("matmul_keysum: " + va.shape_str() + " x " +
                        vb.shape_str());
  Node n{Op::MatMulKeySum, a, b, Tensor(va.rows, vb.cols)};
  // Accumulate each output row in a canonical key order: keys sorted by
  // (weight, value row) so the order, and therefore the rounding, depends
  // only on the multiset of summands. Permuting the keys cannot change the
  // result.
  thread_local std::vector<int> order;
  const int keys = va.cols;
  for (int i = 0; i < va.rows; ++i) {
    const double* a_row = &va.v[static_cast<size_t>(i) * keys];
    order.resize(keys);
    for (int k = 0; k < keys; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](int lhs, int rhs) {
      if (a_row[lhs] != a_row[rhs]) return a_row[lhs] < a_row[rhs];
      const double* bl = &vb.v[static_cast<size_t>(lhs) * vb.cols];
      const double* br = &vb.v[static_cast<size_t>(rhs) * vb.cols];
      return std::lexicographical_compare(bl, bl + vb.cols, br, br + vb.cols);
    });
    double* __restrict out_row = &n.val.v[static_cast<size_t>(i) * vb.cols];
    for (int k : order) {
      const double weight = a_row[k];
      const double* __restrict b_row = &vb.v[static_cast<size_t>(k) * vb.cols];
      for (int j = 0; j < vb.cols; ++j) out_row[j] += weight * b_row[j];
    }
  }
  return push(std::move(n));
}

NodeId Tape::transpose(NodeId a) {
  const Tensor& va = value(a);
  Node n{Op::Transpose, a, -1, Tensor(va.cols, va.rows)};
  for (int i = 0; i < va.rows; ++i)
    for (int j = 0; j < va.cols; ++j) n.val.at(j, i) = va.at(i, j);
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Node n{Op::Relu, a, -1, value(a)};
  for (double& x : n.val.v) x = std::max(x, 0.0);
  return push(std::move(n));
}

NodeId Tape::exp(NodeId a) {
  Node n{Op::Exp, a, -1, value(a)};
  for (double& x : n.val.v) x = std::exp(x);
  return push(std::move(n));
}

NodeId Tape::log(NodeId a) {
  Node n{Op::Log, a, -1, value(a)};
  for (double& x : n.val.v) x = std::log(x);
  return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId a) {
  const Tensor& va = value(a);
  Node n{Op::SoftmaxRows, a, -1, va};
  thread_local std::vector<double> exps;
  for (int i = 0; i < va.rows; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < va.cols; ++j) hi = std::max(hi, va.at(i, j));
    exps.resize(va.cols);
    for (int j = 0; j < va.cols; ++j) exps[j] = std::exp(va.at(i, j) - hi);
    const double denom = detail::perm_sum(exps.data(), va.cols);
    for (int j = 0; j < va.cols; ++j) n.val.at(i, j) = exps[j] / denom;
  }
  return push(std::move(n));
}

NodeId Tape::logsumexp_rows(NodeId a) {
  const Tensor& va = value(a);
  Node n{Op::LogSumExpRows, a, -1, Tensor(va.rows, 1)};
  for (int i = 0; i < va.rows; ++i)
    n.val.at(i, 0) = detail::logsumexp(
        &va.v[static_cast<size_t>(i) * va.cols], va.cols, 1);
  return push(std::move(n));
}

NodeId Tape::logsumexp_cols(NodeId a) {
  const Tensor& va = value(a);
  Node n{Op::LogSumExpCols, a, -1, Tensor(1, va.cols)};
  for (int j = 0; j < va.cols; ++j)
    n.val.at(0, j) = detail::logsumexp(&va.v[j], va.rows, va.cols);
  return push(std::move(n));
}

NodeId Tape::add_rowwise(NodeId m, NodeId row_vec) {
  const Tensor& vm = value(m);
  const Tensor& vr = value(row_vec);
  if (vr.rows != 1 || vr.cols != vm.cols)
    throw ShapeMismatch("add_rowwise: " + vm.shape_str() + " + " +
                        vr.shape_str());
  Node n{Op::AddRowwise, m, row_vec, vm};
  for (int i = 0; i < vm.rows; ++i)
    for (int j = 0; j < vm.cols; ++j) n.val.at(i, j) += vr.at(0, j);
  return push(std::move(n));
}

NodeId Tape::add_colwise(NodeId m, NodeId col_vec) {
  const Tensor& vm = value(m);
  const Tensor& vc = value(col_vec);
  if (vc.cols != 1 || vc.rows != vm.rows)
    throw ShapeMismatch("add_colwise: " + vm.shape_str() + " + " +
                        vc.shape_str());
  Node n{Op::AddColwise, m, col_vec, vm};
  for (int i = 0; i < vm.rows; ++i)
    for (int j = 0; j < vm.cols; ++j) n.val.at(i, j) += vc.at(i, 0);
  return push(std::move(n));
}

NodeId Tape::concat_rows(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.cols != vb.cols)
    throw ShapeMismatch("concat_rows: " + va.shape_str() + " | " +
                        vb.shape_str());
  Node n{Op::ConcatRows, a, b, Tensor(va.rows + vb.rows, va.cols)};
  std::copy(va.v.begin(), va.v.end(), n.val.v.begin());
  std::copy(vb.v.begin(), vb.v.end(), n.val.v.begin() + va.size());
  return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rows != vb.rows)
    throw ShapeMismatch("concat_cols: " + va.shape_str() + " | " +
                        vb.shape_str());
  Node n{Op::ConcatCols, a, b, Tensor(va.rows, va.cols + vb.cols)};
  for (int i = 0; i < va.rows; ++i) {
    for (int j = 0; j < va.cols; ++j) n.val.at(i, j) = va.at(i, j);
    for (int j = 0; j < vb.cols; ++j) n.val.at(i, va.cols + j) = vb.at(i, j);
  }
  return push(std::move(n));
}

NodeId Tape::slice_rows(NodeId a, int row_begin, int row_end) {
  const Tensor& va = value(a);
  if (row_begin < 0 || row_end > va.rows || row_begin >= row_end)
    throw IndexOutOfRange("slice_rows: [" + std::to_string(row_begin) + "," +
                          std::to_string(row_end) + ") of " + va.shape_str());
  Node n{Op::SliceRows, a, -1, Tensor(row_end - row_begin, va.cols)};
  n.i0 = row_begin;
  n.i1 = row_end;
  for (int i = row_begin; i < row_end; ++i)
    for (int j = 0; j < va.cols; ++j) n.val.at(i - row_begin, j) = va.at(i, j);
  return push(std::move(n));
}

NodeId Tape::slice_cols(NodeId a, int col_begin, int col_end) {
  const Tensor& va = value(a);
  if (col_begin < 0 || col_end > va.cols || col_begin >= col_end)
    throw IndexOutOfRange("slice_cols: [" + std::to_string(col_begin) + "," +
                          std::to_string(col_end) + ") of " + va.shape_str());
  Node n{Op::SliceCols, a, -1, Tensor(va.rows, col_end - col_begin)};
  n.i0 = col_begin;
  n.i1 = col_end;
  for (int i = 0; i < va.rows; ++i)
    for (int j = col_begin; j < col_end; ++j)
      n.val.at(i, j - col_begin) = va.at(i, j);
  return push(std::move(n));
}

NodeId Tape::sum_all(NodeId a) {
  const Tensor& va = value(a);
  Node n{Op::SumAll, a, -1, Tensor(1, 1)};
  n.val.v[0] = detail::perm_sum(va.v.data(), static_cast<int>(va.size()));
  return push(std::move(n));
}

NodeId Tape::gather_sum(NodeId a, std::vector<std::pair<int, int>> indices) {
  const Tensor& va = value(a);
  thread_local std::vector<double> picked;
  picked.clear();
  for (const auto& [i, j] : indices) {
    if (i < 0 || i >= va.rows || j < 0 || j >= va.cols)
      throw IndexOutOfRange("gather_sum: (" + std::to_string(i) + "," +
                            std::to_string(j) + ") of " + va.shape_str());
    picked.push_back(va.at(i, j));
  }
  Node n{Op::GatherSum, a, -1, Tensor(1, 1)};
  n.val.v[0] =
      detail::perm_sum(picked.data(), static_cast<int>(picked.size()));
  n.indices = std::move(indices);
  return push(std::move(n));
}

const Tensor& Tape::grad(NodeId id) const {
  if (!grads_valid_) throw Error("Tape::grad: call backward() first");
  return nodes_[check(id)].grad;
}

void Tape::backward(NodeId loss) {
  check(loss);
  const Tensor& lv = nodes_[loss].val;
  if (lv.rows != 1 || lv.cols != 1)
    throw NonScalarLoss("backward: loss has shape " + lv.shape_str());
  for (Node& n : nodes_) {
    n.grad = Tensor(n.val.rows, n.val.cols);
  }
  nodes_[loss].grad.v[0] = 1.0;
  for (int id = loss; id >= 0; --id) backward_step(nodes_[id]);
  grads_valid_ = true;
}

void Tape::backward_step(Node& n) {
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add: {
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (size_t i = 0; i < g.size(); ++i) {
        ga.v[i] += g.v[i];
        gb.v[i] += g.v[i];
      }
      break;
    }
    case Op::Sub: {
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (size_t i = 0; i < g.size(); ++i) {
        ga.v[i] += g.v[i];
        gb.v[i] -= g.v[i];
      }
      break;
    }
    case Op::Mul: {
      const Tensor& va = nodes_[n.a].val;
      const Tensor& vb = nodes_[n.b].val;
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (size_t i = 0; i < g.size(); ++i) {
        ga.v[i] += g.v[i] * vb.v[i];
        gb.v[i] += g.v[i] * va.v[i];
      }
      break;
    }
    case Op::Scale: {
      Tensor& ga = nodes_[n.a].grad;
      for (size_t i = 0; i < g.size(); ++i) ga.v[i] += n.scalar * g.v[i];
      break;
    }
    case Op::MatMul:
    case Op::MatMulKeySum: {
      const Tensor& va = nodes_[n.a].val;
      const Tensor& vb = nodes_[n.b].val;
      gemm_a_bt(g, vb, nodes_[n.a].grad);  // dA += G * B^T
      gemm_at_b(va, g, nodes_[n.b].grad);  // dB += A^T * G
      break;
    }
    case Op::Transpose: {
      Tensor& ga = nodes_[n.a].grad;
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) ga.at(j, i) += g.at(i, j);
      break;
    }
    case Op::Relu: {
      const Tensor& va = nodes_[n.a].val;
      Tensor& ga = nodes_[n.a].grad;
      for (size_t i = 0; i < g.size(); ++i)
        if (va.v[i] > 0.0) ga.v[i] += g.v[i];
      break;
    }
    case Op::Exp: {
      Tensor& ga = nodes_[n.a].grad;
      for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * n.val.v[i];
      break;
    }
    case Op::Log: {
      const Tensor& va = nodes_[n.a].val;
      Tensor& ga = nodes_[n.a].grad;
      for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] / va.v[i];
      break;
    }
    case Op::SoftmaxRows: {
      Tensor& ga = nodes_[n.a].grad;
      thread_local std::vector<double> prods;
      for (int i = 0; i < g.rows; ++i) {
        prods.resize(g.cols);
        for (int j = 0; j < g.cols; ++j)
          prods[j] = g.at(i, j) * n.val.at(i, j);
        const double dot =
            detail::perm_sum(prods.data(), g.cols);
        for (int j = 0; j < g.cols; ++j)
          ga.at(i, j) += n.val.at(i, j) * (g.at(i, j) - dot);
      }
      break;
    }
    case Op::LogSumExpRows: {
      const Tensor& va = nodes_[n.a].val;
      Tensor& ga = nodes_[n.a].grad;
      for (int i = 0; i < va.rows; ++i) {
        const double lse = n.val.at(i, 0);
        if (!std::isfinite(lse)) continue;  // empty/-inf row: zero gradient
        for (int j = 0; j < va.cols; ++j)
          ga.at(i, j) += g.at(i, 0) * std::exp(va.at(i, j) - lse);
      }
      break;
    }
    case Op::LogSumExpCols: {
      const Tensor& va = nodes_[n.a].val;
      Tensor& ga = nodes_[n.a].grad;
      for (int j = 0; j < va.cols; ++j) {
        const double lse = n.val.at(0, j);
        if (!std::isfinite(lse)) continue;
        for (int i = 0; i < va.rows; ++i)
          ga.at(i, j) += g.at(0, j) * std::exp(va.at(i, j) - lse);
      }
      break;
    }
    case Op::AddRowwise: {
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
      thread_local std::vector<double> col;
      for (int j = 0; j < g.cols; ++j) {
        col.resize(g.rows);
        for (int i = 0; i < g.rows; ++i) col[i] = g.at(i, j);
        gb.at(0, j) += detail::perm_sum(col.data(), g.rows);
      }
      break;
    }
    case Op::AddColwise: {
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
      for (int i = 0; i < g.rows; ++i)
        gb.at(i, 0) += detail::perm_sum(
            &g.v[static_cast<size_t>(i) * g.cols], g.cols);
      break;
    }
    case Op::ConcatRows: {
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (size_t i = 0; i < ga.size(); ++i) ga.v[i] += g.v[i];
      for (size_t i = 0; i < gb.size(); ++i) gb.v[i] += g.v[ga.size() + i];
      break;
    }
    case Op::ConcatCols: {
      Tensor& ga = nodes_[n.a].grad;
      Tensor& gb = nodes_[n.b].grad;
      for (int i = 0; i < g.rows; ++i) {
        for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += g.at(i, j);
        for (int j = 0; j < gb.cols; ++j) gb.at(i, j) += g.at(i, ga.cols + j);
      }
      break;
    }
    case Op::SliceRows: {
      Tensor& ga = nodes_[n.a].grad;
      for (int i = n.i0; i < n.i1; ++i)
        for (int j = 0; j < g.cols; ++j) ga.at(i, j) += g.at(i - n.i0, j);
      break;
    }
    case Op::SliceCols: {
      Tensor& ga = nodes_[n.a].grad;
      for (int i = 0; i < g.rows; ++i)
        for (int j = n.i0; j < n.i1; ++j) ga.at(i, j) += g.at(i, j - n.i0);
      break;
    }
    case Op::SumAll: {
      Tensor& ga = nodes_[n.a].grad;
      for (double& x : ga.v) x += g.v[0];
      break;
    }
    case Op::GatherSum: {
      Tensor& ga = nodes_[n.a].grad;
      for (const auto& [i, j] : n.indices) ga.at(i, j) += g.v[0];
      break;
    }
  }
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size())
    throw ShapeMismatch("adam_step: " + std::to_string(params.size()) +
                        " params vs " + std::to_string(grads.size()) +
                        " grads");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->rows, p->cols);
      state.v.emplace_back(p->rows, p->cols);
    }
  }
  if (state.m.size() != params.size())
    throw ShapeMismatch("adam_step: state sized for " +
                        std::to_string(state.m.size()) + " params");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    if (!p.same_shape(g))
      throw ShapeMismatch("adam_step: param " + p.shape_str() + " vs grad " +
                          g.shape_str());
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (size_t i = 0; i < p.size(); ++i) {
      m.v[i] = beta1 * m.v[i] + (1.0 - beta1) * g.v[i];
      v.v[i] = beta2 * v.v[i] + (1.0 - beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      p.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace plvo::ad
