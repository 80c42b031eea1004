#pragma once

#include "dexfm/data.hpp"
#include "dexfm/tensor.hpp"

namespace dexfm {

// One row per global feature id.
struct EmbeddingTable {
  Tensor weights;  // V x d
  std::size_t dim() const { return weights.cols(); }
  std::size_t vocab_size() const { return weights.rows(); }
};

// Row i of the result is the sum of the table rows for field i's active ids
// (a single row for one-hot fields). The concatenation of the rows is the
// model input vector.
Tensor embed_instance(const EncodedInstance& instance, const EmbeddingTable& table);

// Scatter of the field-row gradient back onto the table: every active id of
// field i accumulates grad_x0 row i.
struct SparseRowGrad {
  std::uint32_t id;
  std::vector<double> grad;
};
std::vector<SparseRowGrad> embed_backward(const EncodedInstance& instance, const Tensor& grad_x0);

// Dense accumulation used by the training path.
void accumulate_embedding_grad(const EncodedInstance& instance, const Tensor& grad_x0,
                               Tensor& table_grad);

}  // namespace dexfm
