#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dexfm/tensor.hpp"

namespace dexfm {

// Interaction-network layout. All layers must share one feature-map count
// when the attention network is enabled (its weight matrix is shared across
// layers).
struct DeinConfig {
  std::size_t depth = 3;
  std::vector<std::size_t> feature_maps;  // e_1..e_K
  std::size_t attention_hidden = 32;      // a
  bool attention = true;

  static DeinConfig uniform(std::size_t depth, std::size_t maps, bool attention = true,
                            std::size_t attention_hidden = 32);
  void validate() const;
  std::size_t output_size() const;  // sum of e_k
};

// out[l,:] = sum_{i,j} W[l,i,j] * (Xk[i,:] o X0[j,:]); weights shape
// (e_next, e_prev, m). The first layer is the same contraction with Xk = X0.
Tensor cin_layer(const Tensor& xk, const Tensor& x0, const Tensor& weights);

// s_l = sum_j X[l,j]
Tensor sum_pool(const Tensor& xk);

struct HiddenState {
  std::vector<Tensor> layers;  // X^1..X^K, each e_k x d
  std::vector<Tensor> pooled;  // s^1..s^K
};

// Runs the full layer recurrence and concatenates the pooled vectors.
std::pair<Tensor, HiddenState> dein_forward(const Tensor& x0, std::span<const Tensor> weights,
                                            const DeinConfig& config);

// Mean Euclidean distance of a layer's feature maps from their centroid.
double diversity(const Tensor& xk);

// a'_k = h^T ReLU(W s^k + b), softmax-normalized across layers.
std::vector<double> attention_weights(std::span<const Tensor> pooled, const Tensor& h,
                                      const Tensor& w, const Tensor& b);

struct DiversityReport {
  std::vector<double> raw;       // Divs per layer
  std::vector<double> weights;   // a_k (all ones when attention is off)
  std::vector<double> weighted;  // a_k * Divs
  double total = 0.0;
};

DiversityReport weighted_diversity(const HiddenState& state,
                                   const std::optional<std::vector<double>>& attention);

}  // namespace dexfm
