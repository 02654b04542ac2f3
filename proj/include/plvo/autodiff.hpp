#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "plvo/errors.hpp"
#include "plvo/rng.hpp"

namespace plvo::ad {

namespace detail {
/// Sum that depends only on the multiset of addends, not their order:
/// the inputs are sorted before accumulation. This is what makes the
/// matcher forward pass exactly permutation-equivariant.
double perm_sum(const double* values, int n);
/// Max-shifted log(sum(exp(x))) over a strided range, built on perm_sum.
double logsumexp(const double* values, int n, int stride);
}  // namespace detail

/// Dense row-major matrix of doubles. Rank is fixed at 2; vectors are 1xN
/// or Nx1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double value);
  static Tensor identity(int n);
  static Tensor scalar(double value);
  static Tensor randn(int r, int c, Rng& rng, double stddev = 1.0);
  /// Xavier-uniform initialization for a (fan_in x fan_out) weight matrix.
  static Tensor xavier(int fan_in, int fan_out, Rng& rng, double gain = 1.0);

  double& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }
  size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }
  std::string shape_str() const;
  bool all_finite() const;
};

using NodeId = int;

/// Reverse-mode tape over Tensor values. Operations execute eagerly and
/// record enough structure for backward(). A tape is single-threaded;
/// independent tapes may run concurrently.
class Tape {
 public:
  /// Registers a leaf. Only leaves with requires_grad participate in
  /// gradient accumulation (constants still flow values).
  NodeId input(Tensor value, bool requires_grad = true);
  NodeId constant(Tensor value) { return input(std::move(value), false); }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId scale(NodeId a, double s);
  NodeId matmul(NodeId a, NodeId b);
  /// matmul whose inner sums are order-invariant (sorted accumulation).
  /// Used where the reduction runs over a permutable feature axis, e.g.
  /// attention value aggregation.
  NodeId matmul_keysum(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId softmax_rows(NodeId a);
  NodeId logsumexp_rows(NodeId a);  // m x n -> m x 1
  NodeId logsumexp_cols(NodeId a);  // m x n -> 1 x n
  NodeId add_rowwise(NodeId m, NodeId row_vec);  // broadcast 1 x n over rows
  NodeId add_colwise(NodeId m, NodeId col_vec);  // broadcast m x 1 over cols
  NodeId concat_rows(NodeId a, NodeId b);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId slice_rows(NodeId a, int row_begin, int row_end);
  NodeId slice_cols(NodeId a, int col_begin, int col_end);
  NodeId sum_all(NodeId a);  // -> 1 x 1
  /// Sum of the entries at the given (row, col) positions. -> 1 x 1
  NodeId gather_sum(NodeId a, std::vector<std::pair<int, int>> indices);
  NodeId neg(NodeId a) { return scale(a, -1.0); }

  const Tensor& value(NodeId id) const { return nodes_[check(id)].val; }
  /// Gradient of the last backward() target w.r.t. node `id`. Zeros for
  /// nodes the loss does not depend on.
  const Tensor& grad(NodeId id) const;

  /// Accumulates gradients of a scalar loss into every node.
  /// Throws NonScalarLoss if the target is not 1x1.
  void backward(NodeId loss);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  enum class Op {
    Leaf, Add, Sub, Mul, Scale, MatMul, MatMulKeySum, Transpose, Relu, Exp,
    Log, SoftmaxRows, LogSumExpRows, LogSumExpCols, AddRowwise, AddColwise,
    ConcatRows, ConcatCols, SliceRows, SliceCols, SumAll, GatherSum,
  };

  struct Node {
    Node() = default;
    Node(Op op_, NodeId a_, NodeId b_, Tensor val_)
        : op(op_), a(a_), b(b_), val(std::move(val_)) {}

    Op op = Op::Leaf;
    NodeId a = -1;
    NodeId b = -1;
    Tensor val;
    Tensor grad;
    bool requires_grad = true;
    double scalar = 0.0;                       // Scale
    int i0 = 0, i1 = 0;                        // Slice bounds
    std::vector<std::pair<int, int>> indices;  // GatherSum
  };

  NodeId push(Node node);
  int check(NodeId id) const;
  void backward_step(Node& node);

  std::vector<Node> nodes_;
  bool grads_valid_ = false;
};

/// Optimizer state for adam_step; lazily sized on first use.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

/// Standard Adam update applied in-place to `params`.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

}  // namespace plvo::ad
