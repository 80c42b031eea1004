#include "dexfm/deepnet.hpp"

#include <cmath>
#include <stdexcept>

namespace dexfm {

Tensor mlp_forward(const Tensor& x0, std::span<const Tensor> weights, std::span<const Tensor> biases) {
  if (weights.size() != biases.size())
    throw std::invalid_argument("mlp: weight/bias count mismatch");
  Tensor x = x0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Tensor& w = weights[l];
    const Tensor& b = biases[l];
    if (w.rank() != 2 || w.cols() != x.numel() || b.numel() != w.rows())
      throw std::invalid_argument("mlp: shape mismatch at layer " + std::to_string(l));
    Tensor next({w.rows()});
    // matvec-then-bias accumulation order, matching the recorded graph
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < w.cols(); ++j) acc += w.at(i, j) * x[j];
      acc += b[i];
      next[i] = acc > 0.0 ? acc : 0.0;
    }
    x = std::move(next);
  }
  return x;
}

double linear_forward(const EncodedInstance& instance, const Tensor& weights) {
  double acc = 0.0;
  for (const auto& ids : instance.field_ids)
    for (std::uint32_t id : ids) {
      if (id >= weights.numel())
        throw std::invalid_argument("linear: id " + std::to_string(id) + " out of range");
      acc += weights[id];
    }
  return acc;
}

double combine(const Tensor& x_dein, const Tensor* x_deep, double linear_term,
               const OutputParams& out) {
  if (out.w_dein.numel() != x_dein.numel())
    throw std::invalid_argument("combine: interaction branch length mismatch");
  double z = 0.0;
  for (std::size_t i = 0; i < x_dein.numel(); ++i) z += out.w_dein[i] * x_dein[i];
  if (x_deep != nullptr) {
    if (out.w_deep.numel() != x_deep->numel())
      throw std::invalid_argument("combine: deep branch length mismatch");
    double deep = 0.0;
    for (std::size_t i = 0; i < x_deep->numel(); ++i) deep += out.w_deep[i] * (*x_deep)[i];
    z += deep;
  }
  z += linear_term;
  z += out.bias;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace dexfm
