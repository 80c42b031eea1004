#pragma once

#include <cstdint>
#include <vector>

#include "dexfm/tensor.hpp"

namespace dexfm {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected first/second moment accumulators, one pair per parameter
// tensor, plus the shared step counter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  static AdamState like(const std::vector<const Tensor*>& params);
};

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace dexfm
