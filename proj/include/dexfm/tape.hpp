#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dexfm/tensor.hpp"

namespace dexfm {

// sqrt(x + kSqrtEps) replaces bare square roots so the Euclidean distance
// stays differentiable at zero spread.
inline constexpr double kSqrtEps = 1e-12;

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  MatVec,
  MatMul,
  Hadamard,
  Add,
  Scale,
  Concat,
  SumReduce,
  Relu,
  Sigmoid,
  Softmax,
  SqrtEps,
  MeanRows,
  EuclideanDist,
  Row,
  Reshape,
  EmbedGather,
  SelectSum,
  CinContract,
  CrossEntropy,
};

struct ValueId {
  std::uint32_t v;
};

// One recorded primitive application: inputs, forward value, and whatever
// the backward rule needs (aux scalar, index lists, saved intermediates).
struct Node {
  Op op = Op::Leaf;
  std::vector<ValueId> inputs;
  Tensor value;
  double aux = 0.0;                            // Scale factor, Row index
  std::vector<std::vector<std::uint32_t>> id_groups;  // EmbedGather: ids per field
  std::vector<std::uint32_t> ids;              // SelectSum
  Tensor saved;                                // CinContract: Z; CrossEntropy: labels
};

// Interaction-layer forward kernel, shared by the tape op and the
// module-level wrapper. When save_z is given, the materialized pairwise
// Hadamard block (e_prev*m x d) is stored there for the backward pass.
Tensor cin_forward(const Tensor& xk, const Tensor& x0, const Tensor& weights,
                   Tensor* save_z = nullptr);

// Reverse-mode tape. Nodes are recorded in topological order by
// construction; backward() walks them once in reverse, accumulating
// adjoints additively, and returns one gradient per node (leaves carry the
// parameter gradients).
class Tape {
 public:
  ValueId leaf(Tensor value);
  ValueId constant(Tensor value);

  ValueId matvec(ValueId m, ValueId v);
  ValueId matmul(ValueId a, ValueId b);
  ValueId hadamard(ValueId a, ValueId b);
  ValueId add(ValueId a, ValueId b);
  ValueId scale(ValueId a, double factor);
  ValueId concat(std::span<const ValueId> parts);
  ValueId sum_reduce(ValueId a);
  ValueId relu(ValueId a);
  ValueId sigmoid(ValueId a);
  ValueId softmax(ValueId a);
  ValueId sqrt_eps(ValueId a);
  ValueId mean_rows(ValueId a);
  ValueId euclidean_dist(ValueId x, ValueId y);
  ValueId row(ValueId a, std::size_t index);
  ValueId reshape(ValueId a, std::vector<std::size_t> extents);

  // Sums the embedding rows of each field's active ids into an m x d matrix.
  ValueId embed_gather(ValueId table, const std::vector<std::vector<std::uint32_t>>& field_ids);
  // Sparse dot product with an implicit indicator vector: sum of w[id].
  ValueId select_sum(ValueId weights, const std::vector<std::uint32_t>& active_ids);
  // One interaction layer: out[l,:] = sum_{i,j} W[l,i,j] * (Xk[i,:] o X0[j,:]).
  // W has shape (e_next, e_prev, m). Materializes the pairwise Hadamard
  // block Z (e_prev*m x d) and contracts it with W flattened to a matrix.
  ValueId cin_contract(ValueId xk, ValueId x0, ValueId weights);
  // Mean negated log-likelihood of binary labels; predictions are clipped
  // to [clip, 1-clip] and clipped coordinates get zero gradient.
  ValueId cross_entropy(ValueId predictions, const std::vector<double>& labels, double clip);

  const Tensor& value(ValueId id) const { return nodes_[id.v].value; }
  const Node& node(ValueId id) const { return nodes_[id.v]; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Seed must be a scalar. Returns adjoints for every node.
  std::vector<Tensor> backward(ValueId seed_output) const;

  // Debug mode: every recorded value is scanned for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  ValueId push(Node n);
  std::vector<Node> nodes_;
  bool check_finite_ = false;
};

}  // namespace dexfm
