#include "dexfm/embedding.hpp"

#include <map>
#include <stdexcept>

namespace dexfm {

Tensor embed_instance(const EncodedInstance& instance, const EmbeddingTable& table) {
  const std::size_t m = instance.field_ids.size();
  const std::size_t d = table.dim();
  Tensor x0({m, d});
  for (std::size_t f = 0; f < m; ++f) {
    if (instance.field_ids[f].empty())
      throw std::invalid_argument("embed: field " + std::to_string(f) + " has no active ids");
    for (std::uint32_t id : instance.field_ids[f]) {
      if (id >= table.vocab_size())
        throw std::invalid_argument("embed: id " + std::to_string(id) + " out of range");
      for (std::size_t j = 0; j < d; ++j) x0.at(f, j) += table.weights.at(id, j);
    }
  }
  return x0;
}

std::vector<SparseRowGrad> embed_backward(const EncodedInstance& instance, const Tensor& grad_x0) {
  if (grad_x0.rank() != 2 || grad_x0.rows() != instance.field_ids.size())
    throw std::invalid_argument("embed_backward: gradient shape mismatch");
  const std::size_t d = grad_x0.cols();
  std::map<std::uint32_t, std::vector<double>> acc;
  for (std::size_t f = 0; f < instance.field_ids.size(); ++f)
    for (std::uint32_t id : instance.field_ids[f]) {
      auto [it, inserted] = acc.try_emplace(id, std::vector<double>(d, 0.0));
      for (std::size_t j = 0; j < d; ++j) it->second[j] += grad_x0.at(f, j);
    }
  std::vector<SparseRowGrad> out;
  out.reserve(acc.size());
  for (auto& [id, g] : acc) out.push_back({id, std::move(g)});
  return out;
}

void accumulate_embedding_grad(const EncodedInstance& instance, const Tensor& grad_x0,
                               Tensor& table_grad) {
  for (const SparseRowGrad& rg : embed_backward(instance, grad_x0))
    for (std::size_t j = 0; j < rg.grad.size(); ++j) table_grad.at(rg.id, j) += rg.grad[j];
}

}  // namespace dexfm
