#pragma once

#include <span>

#include "dexfm/data.hpp"
#include "dexfm/tensor.hpp"

namespace dexfm {

struct MlpConfig {
  std::size_t depth = 2;
  std::size_t width = 300;
};

// ReLU feed-forward stack over the concatenated embedding vector.
Tensor mlp_forward(const Tensor& x0, std::span<const Tensor> weights, std::span<const Tensor> biases);

// Raw-feature dot product: sum of the weights of the active global ids
// (active ids carry indicator value 1).
double linear_forward(const EncodedInstance& instance, const Tensor& weights);

struct OutputParams {
  Tensor w_dein;
  Tensor w_deep;  // empty when the deep branch is absent
  double bias = 0.0;
};

// sigmoid(w_dein . x_dein + w_deep . x_deep + linear + bias); absent
// branches contribute exactly zero.
double combine(const Tensor& x_dein, const Tensor* x_deep, double linear_term,
               const OutputParams& out);

}  // namespace dexfm
